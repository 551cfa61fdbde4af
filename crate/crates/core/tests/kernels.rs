mod common;

use std::time::Instant;

use bmlp::bitcore::{dot_words, xnor_popcount_dot};
use bmlp::rng::{stream, Purpose};
use bmlp::{BitMatrix, BitVector, Hyperparams, Network};
use proptest::prelude::*;
use rand::Rng;

use common::{naive_dot, naive_forward, random_signs, unpack_matrix};

fn signs(len: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1 } else { -1 }), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn packed_dot_matches_oracle((a, b) in (1usize..=4096).prop_flat_map(|n| (signs(n), signs(n)))) {
        let pa: BitVector = BitVector::pack_signs(&a).unwrap();
        let pb: BitVector = BitVector::pack_signs(&b).unwrap();
        let d = xnor_popcount_dot(&pa, &pb).unwrap();
        prop_assert_eq!(d, naive_dot(&a, &b));
        prop_assert_eq!((d - a.len() as i32).rem_euclid(2), 0);
        let agree = a.iter().zip(&b).filter(|(x, y)| x == y).count() as i32;
        prop_assert_eq!(d, 2 * agree - a.len() as i32);
    }

    #[test]
    fn narrow_words_agree_with_u64((a, b) in (1usize..=300).prop_flat_map(|n| (signs(n), signs(n)))) {
        let wide = xnor_popcount_dot(
            &BitVector::<u64>::pack_signs(&a).unwrap(),
            &BitVector::<u64>::pack_signs(&b).unwrap(),
        ).unwrap();
        let narrow = xnor_popcount_dot(
            &BitVector::<u8>::pack_signs(&a).unwrap(),
            &BitVector::<u8>::pack_signs(&b).unwrap(),
        ).unwrap();
        let huge = xnor_popcount_dot(
            &BitVector::<u128>::pack_signs(&a).unwrap(),
            &BitVector::<u128>::pack_signs(&b).unwrap(),
        ).unwrap();
        prop_assert_eq!(wide, narrow);
        prop_assert_eq!(wide, huge);
    }
}

#[test]
fn pack_unpack_roundtrip_every_length() {
    let mut rng = common::rng(5);
    for len in 0..=256 {
        for _ in 0..4 {
            let v = random_signs(&mut rng, len);
            let p: BitVector = BitVector::pack_signs(&v).unwrap();
            assert_eq!(p.unpack(), v, "len {len}");
            assert_eq!(p.len(), len);
            let rebuilt: BitVector = BitVector::from_words(len, p.words().to_vec()).unwrap();
            assert_eq!(rebuilt, p);
        }
    }
}

#[test]
fn thousand_instances_within_a_second() {
    let mut rng = stream(11, Purpose::Init);
    let cases: Vec<(Vec<i32>, Vec<i32>)> = (0..1000)
        .map(|_| {
            let n = rng.gen_range(1..=4096);
            (random_signs(&mut rng, n), random_signs(&mut rng, n))
        })
        .collect();
    let start = Instant::now();
    for (a, b) in &cases {
        let pa: BitVector = BitVector::pack_signs(a).unwrap();
        let pb: BitVector = BitVector::pack_signs(b).unwrap();
        assert_eq!(dot_words(pa.words(), pb.words(), a.len()), naive_dot(a, b));
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn forward_matches_unpacked_reference() {
    for (seed, dims, clamp) in [
        (1u64, vec![37, 65, 9], None),
        (2, vec![784, 135, 45], None),
        (3, vec![100, 64, 64, 64], Some(4)),
        (4, vec![129, 300], Some(8)),
    ] {
        let hyper = Hyperparams { seed, ..Hyperparams::default() };
        let net = Network::init(&dims, 10, &hyper, &mut stream(seed, Purpose::Init)).unwrap();
        let mut rng = common::rng(seed + 100);
        let rows: Vec<Vec<i32>> = (0..33).map(|_| random_signs(&mut rng, dims[0])).collect();
        let input = BitMatrix::from_fn(rows.len(), dims[0], |i, j| rows[i][j] > 0);
        let trace = net.forward(&input, clamp).unwrap();
        let reference = naive_forward(&net, &rows, clamp);
        for (l, (lt, nl)) in trace.layers.iter().zip(&reference).enumerate() {
            for mu in 0..rows.len() {
                assert_eq!(lt.preactivation(mu), &nl.pre[mu][..], "layer {l} pattern {mu}");
                assert_eq!(lt.output(mu), &nl.out[mu][..], "layer {l} pattern {mu}");
            }
            assert_eq!(unpack_matrix(&lt.act), nl.act);
            let k = dims[l + 1] as i32;
            assert!(lt.out.iter().all(|&y| (y - k).rem_euclid(2) == 0), "output parity");
            if clamp.is_none() {
                let kp = dims[l] as i32;
                assert!(lt.pre.iter().all(|&z| (z - kp).rem_euclid(2) == 0), "pre-activation parity");
            }
        }
    }
}
