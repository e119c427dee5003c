//! Finite-difference checks against directly written-out losses.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subseg::constraints::RectifierNet;
use subseg::features::PairAssignment;
use subseg::joint::{loss_cons_grad, triple_batch_gradient, JointModel, LossWeights, Mlp};

use super::{cons_loss_oracle, rel_err, sigmoid};

const H: f64 = 1e-6;

fn central<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + H;
            let up = f(&v);
            v[i] = orig - H;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn random_net(rng: &mut ChaCha8Rng, k: usize) -> RectifierNet<f64> {
    let w = Array2::from_shape_fn((k, 42), |_| rng.gen_range(-1.0..1.0));
    let b = Array1::from_shape_fn(k, |_| rng.gen_range(-1.0..0.5));
    RectifierNet::from_parts(w, b).unwrap()
}

fn rows(net: &RectifierNet<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    (net.w.outer_iter().map(|r| r.to_vec()).collect(), net.b.to_vec())
}

/// Weighted mean cross-entropy of the rectifier net, parameters flattened
/// as `w` (row-major) then `b`.
fn bce_oracle(params: &[f64], k: usize, xs: &[Vec<f64>], ts: &[f64], cs: &[f64]) -> f64 {
    let w: Vec<Vec<f64>> = params[..k * 42].chunks(42).map(|r| r.to_vec()).collect();
    let b = &params[k * 42..];
    let mut total = 0.0;
    for ((x, &t), &c) in xs.iter().zip(ts).zip(cs) {
        let hinge: f64 = w
            .iter()
            .zip(b)
            .map(|(row, &bk)| (row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + bk).max(0.0))
            .sum();
        let p = sigmoid(1.0 - hinge);
        total -= c * (t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    }
    total / cs.iter().sum::<f64>()
}

/// Relative error of the rectifier parameter gradient at `points` random
/// nets and batches; `weighted` draws non-uniform example weights.
pub fn rectifier_errors(points: usize, seed: u64, weighted: bool) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let k = rng.gen_range(1..=10);
            let net = random_net(&mut rng, k);
            let n = rng.gen_range(1..=6);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..42).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            let ts: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
            let cs: Vec<f64> = (0..n)
                .map(|_| if weighted { rng.gen_range(0.1..5.0) } else { 1.0 })
                .collect();
            let xm = Array2::from_shape_fn((n, 42), |(r, c)| xs[r][c]);
            let g = if weighted {
                net.grad_weighted(xm.view(), Array1::from(ts.clone()).view(), Array1::from(cs.clone()).view())
            } else {
                net.grad(xm.view(), Array1::from(ts.clone()).view())
            }
            .unwrap();
            let analytic: Vec<f64> = g.w.iter().chain(g.b.iter()).copied().collect();
            let params: Vec<f64> = net.w.iter().chain(net.b.iter()).copied().collect();
            let numeric = central(&params, |p| bce_oracle(p, k, &xs, &ts, &cs));
            rel_err(&analytic, &numeric)
        })
        .collect()
}

/// Relative error of `d L_cons / d psi` at random nets and points.
pub fn lcons_errors(points: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| {
            let net = random_net(&mut rng, 10);
            let (w, b) = rows(&net);
            let psi: Vec<f64> = (0..42).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (_, analytic) = loss_cons_grad(&net, &psi).unwrap();
            let numeric = central(&psi, |x| cons_loss_oracle(&w, &b, x));
            rel_err(&analytic, &numeric)
        })
        .collect()
}

fn mlp_forward(m: &[f64], dims: (usize, usize, usize), x: &[f64]) -> Vec<f64> {
    let (input, hidden, output) = dims;
    let (w1, rest) = m.split_at(hidden * input);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(output * hidden);
    let h: Vec<f64> = (0..hidden)
        .map(|r| (w1[r * input..(r + 1) * input].iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b1[r]).max(0.0))
        .collect();
    (0..output)
        .map(|r| w2[r * hidden..(r + 1) * hidden].iter().zip(&h).map(|(a, v)| a * v).sum::<f64>() + b2[r])
        .collect()
}

struct TripleProblem {
    x: Array2<f64>,
    gold: Vec<PairAssignment>,
    triples: Vec<[usize; 3]>,
    net: RectifierNet<f64>,
    weights: LossWeights,
}

/// Mean over triples of the weighted three-part loss, computed from the
/// flattened relation and segment head parameters.
fn triple_oracle(rel: &[f64], rd: (usize, usize, usize), seg: &[f64], sd: (usize, usize, usize), p: &TripleProblem) -> f64 {
    let (w, b) = rows(&p.net);
    let preds: Vec<([f64; 4], f64)> = p
        .x
        .outer_iter()
        .map(|row| {
            let x = row.to_vec();
            let o = mlp_forward(rel, rd, &x);
            let m = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = o.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            let y = [e[0] / s, e[1] / s, e[2] / s, e[3] / s];
            (y, sigmoid(mlp_forward(seg, sd, &x)[0]))
        })
        .collect();
    let mut total = 0.0;
    for t in &p.triples {
        let (mut sub, mut segl) = (0.0, 0.0);
        for &r in t {
            let (y, z) = preds[r];
            let g = p.gold[r];
            sub -= y[g.relation.index()].ln() / 3.0;
            segl -= if g.same_segment { z.ln() } else { (1.0 - z).ln() } / 3.0;
        }
        let (ij, jk, ik) = (preds[t[0]], preds[t[1]], preds[t[2]]);
        let mut psi = vec![0.0; 42];
        psi[..4].copy_from_slice(&ij.0);
        psi[4] = ij.1;
        psi[5..9].copy_from_slice(&jk.0);
        psi[9] = jk.1;
        // Powerset slot: bit 4 - r for relation r, bit 0 for the segment flag.
        for r in 0..4 {
            let bit = 1usize << (4 - r);
            psi[10 + bit + 1] = ik.0[r] * ik.1;
            psi[10 + bit] = ik.0[r] * (1.0 - ik.1);
        }
        let cons = cons_loss_oracle(&w, &b, &psi);
        total += p.weights.sub * sub + p.weights.seg * segl + p.weights.cons * cons;
    }
    total / p.triples.len() as f64
}

fn flat(m: &Mlp<f64>) -> Vec<f64> {
    m.w1.iter().chain(m.b1.iter()).chain(m.w2.iter()).chain(m.b2.iter()).copied().collect()
}

fn dims(m: &Mlp<f64>) -> (usize, usize, usize) {
    (m.input_dim(), m.hidden_dim(), m.output_dim())
}

/// Relative errors of the relation-head and segment-head gradients of the
/// mean triple loss with a positive constraint weight.
pub fn joint_head_errors(points: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rel_errs = Vec::new();
    let mut seg_errs = Vec::new();
    for _ in 0..points {
        let event_dim = rng.gen_range(2..=4);
        let model = JointModel::<f64>::init(4 * event_dim, rng.gen(), false);
        let rows_n = rng.gen_range(3..=8);
        let x = Array2::from_shape_fn((rows_n, 4 * event_dim), |_| rng.gen_range(-1.5..1.5));
        let gold = (0..rows_n)
            .map(|_| PairAssignment::ALL[rng.gen_range(0..8)])
            .collect();
        let triples = (0..rng.gen_range(1..=4))
            .map(|_| [0, 1, 2].map(|_| rng.gen_range(0..rows_n)))
            .collect();
        let p = TripleProblem {
            x,
            gold,
            triples,
            net: random_net(&mut rng, 10),
            weights: LossWeights {
                sub: rng.gen_range(0.5..1.5),
                seg: rng.gen_range(0.5..1.5),
                cons: rng.gen_range(0.5..1.5),
            },
        };
        let (_, g) = triple_batch_gradient(&model, p.x.view(), &p.gold, &p.triples, Some(&p.net), &p.weights, None).unwrap();
        let (rel, seg) = (flat(&model.relation), flat(&model.segment));
        let (rd, sd) = (dims(&model.relation), dims(&model.segment));
        let num_rel = central(&rel, |r| triple_oracle(r, rd, &seg, sd, &p));
        let num_seg = central(&seg, |s| triple_oracle(&rel, rd, s, sd, &p));
        rel_errs.push(rel_err(&flat(&g.relation), &num_rel));
        seg_errs.push(rel_err(&flat(&g.segment), &num_seg));
    }
    (rel_errs, seg_errs)
}

pub fn max(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}
