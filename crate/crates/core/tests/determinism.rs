mod common;

use bmlp::persist::encode;
use bmlp::rng::{stream, Purpose};
use bmlp::train::{fit, EvalSchedule};
use bmlp::{Gamma, Hyperparams, Network, TrainState};

use common::teacher_dataset;

fn run(hyper: &Hyperparams, threads: usize) -> (Vec<u8>, Vec<String>) {
    let ds = teacher_dataset(hyper.seed, 400, 70, 4);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut net = Network::init(&[70, 60, 60, 30], 4, hyper, &mut stream(hyper.seed, Purpose::Init)).unwrap();
        let mut state = TrainState::new(hyper);
        let history = fit(&mut net, &ds, Some(&ds), hyper, &mut state, EvalSchedule::EveryEpoch, |_| {}).unwrap();
        let log =
            history.iter().map(|m| format!("{} {} {} {:?}", m.epoch, m.p_r, m.error_fraction, m.layers)).collect();
        (encode(&net, &state, hyper), log)
    })
}

#[test]
fn identical_results_across_thread_counts() {
    let hyper = Hyperparams { epochs: 4, batch_size: 32, gamma: Gamma::Fixed(15), seed: 42, ..Hyperparams::default() };
    let serial = run(&hyper, 1);
    assert_eq!(serial, run(&hyper, 1));
    assert_eq!(serial, run(&hyper, 4));
    assert_eq!(serial, run(&hyper, 3));
}

#[test]
fn seeds_change_the_outcome() {
    let a = Hyperparams { epochs: 2, batch_size: 32, gamma: Gamma::Fixed(15), seed: 1, ..Hyperparams::default() };
    let b = Hyperparams { seed: 2, ..a.clone() };
    assert_ne!(run(&a, 1).0, run(&b, 1).0);
}

#[test]
fn forward_is_thread_count_independent() {
    let hyper = Hyperparams::default();
    let net = Network::init(&[70, 60, 30], 4, &hyper, &mut stream(9, Purpose::Init)).unwrap();
    let ds = teacher_dataset(9, 257, 70, 4);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(5).build().unwrap();
    let a = one.install(|| net.forward(ds.inputs(), None).unwrap());
    let b = many.install(|| net.forward(ds.inputs(), None).unwrap());
    for (x, y) in a.layers.iter().zip(&b.layers) {
        assert_eq!(x.pre, y.pre);
        assert_eq!(x.out, y.out);
        assert_eq!(x.act, y.act);
    }
    assert_eq!(a.counts, b.counts);
}
