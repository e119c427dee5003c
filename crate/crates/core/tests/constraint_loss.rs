mod common;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subseg::constraints::{train, LearnConfig, RectifierNet};
use subseg::corpus::RelationLabel;
use subseg::features::{featurize_subgraph, PairAssignment, ValueSet};
use subseg::joint::{loss_cons, soft_featurize, PairPrediction};

use common::{membership_oracle, oracle_examples};

const FLOOR: f64 = 0.313_261_687_518_222_8;

#[test]
fn floor_holds_for_random_psi() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lowest = f64::INFINITY;
    for _ in 0..10_000 {
        let k = rng.gen_range(1..=10);
        let w = Array2::from_shape_fn((k, 42), |_| rng.gen_range(-2.0..2.0));
        let b = Array1::from_shape_fn(k, |_| rng.gen_range(-2.0..2.0));
        let net = RectifierNet::from_parts(w, b).unwrap();
        let psi: Vec<f64> = (0..42).map(|_| rng.gen_range(0.0..1.0)).collect();
        lowest = lowest.min(loss_cons(&net, &psi).unwrap());
    }
    assert!(lowest >= FLOOR - 1e-9, "{lowest}");
}

#[test]
fn floor_is_attained_with_inactive_hinges() {
    let net = RectifierNet::<f64>::constant(10, -1.0);
    let psi = [0.5; 42];
    assert!((loss_cons(&net, &psi).unwrap() - FLOOR).abs() < 1e-15);
    let neg_ln_half = std::f64::consts::LN_2;
    let mut w = Array2::zeros((1, 42));
    w[[0, 0]] = 1.0;
    let one = RectifierNet::from_parts(w, Array1::zeros(1)).unwrap();
    let mut x = [0.0; 42];
    x[0] = 1.0;
    assert!((loss_cons(&one, &x).unwrap() - neg_ln_half).abs() < 1e-12);
}

#[test]
fn hard_predictions_reproduce_binary_features() {
    for a in PairAssignment::ALL {
        for b in PairAssignment::ALL {
            for c in PairAssignment::ALL {
                let psi = soft_featurize::<f64>(&PairPrediction::hard(a), &PairPrediction::hard(b), &PairPrediction::hard(c));
                let x = featurize_subgraph(a, b, [c].into_iter().collect::<ValueSet>()).to_vec::<f64>();
                assert_eq!(psi.to_vec(), x, "{a} {b} {c}");
            }
        }
    }
}

#[test]
fn soft_slots_form_a_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let mut p = || {
            let raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
            let s: f64 = raw.iter().sum();
            PairPrediction {
                y: raw.map(|v| v / s),
                z: rng.gen_range(0.0..1.0),
            }
        };
        let (ij, jk, ik) = (p(), p(), p());
        let psi = soft_featurize(&ij, &jk, &ik);
        let total: f64 = psi[10..].iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for s in 0..32 {
            if PairAssignment::from_subset_index(s).is_none() {
                assert_eq!(psi[10 + s], 0.0);
            }
        }
    }
}

fn transitivity_net() -> RectifierNet<f64> {
    let cfg = LearnConfig {
        max_epochs: 300,
        seed: 2,
        ..Default::default()
    };
    train::<f64>(&oracle_examples(&membership_oracle()), &cfg).unwrap().0
}

fn pred(r: RelationLabel, confidence: f64) -> PairPrediction<f64> {
    let mut y = [(1.0 - confidence) / 3.0; 4];
    y[r.index()] = confidence;
    PairPrediction { y, z: 0.5 }
}

#[test]
fn more_confident_chain_over_norel_costs_more() {
    let net = transitivity_net();
    let ik = pred(RelationLabel::NoRel, 1.0);
    let losses: Vec<f64> = [0.7, 0.8, 0.9, 1.0]
        .into_iter()
        .map(|c| {
            let p = pred(RelationLabel::ParentChild, c);
            loss_cons(&net, &soft_featurize(&p, &p, &ik)).unwrap()
        })
        .collect();
    assert!(losses.windows(2).all(|w| w[1] > w[0]), "{losses:?}");
    let legit = pred(RelationLabel::ParentChild, 1.0);
    let closed = loss_cons(&net, &soft_featurize(&legit, &legit, &legit)).unwrap();
    assert!(closed < losses[3], "{closed} vs {}", losses[3]);
}
