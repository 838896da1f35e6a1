#![allow(dead_code)]

pub mod checks;

use optidelay::envlab::LinearEnvironment;
use optidelay::protocol::FnHints;
use optidelay::{
    run_protocol, DelaySchedule, DelayedLearner, GradientVector, HintProvider, RunHistory, SimplexWeights,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gv(v: &[f64]) -> GradientVector {
    GradientVector::new(v.to_vec()).unwrap()
}

pub fn random_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> GradientVector {
    GradientVector::new((0..d).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn random_stream(rng: &mut ChaCha8Rng, d: usize, horizon: usize, scale: f64) -> Vec<GradientVector> {
    (0..horizon).map(|_| random_vector(rng, d, scale)).collect()
}

/// Runs `learner` on linear losses with hints taken from a fixed list.
pub fn run_with_hints<L: DelayedLearner + ?Sized>(
    learner: &mut L,
    stream: &[GradientVector],
    schedule: &DelaySchedule,
    hints: &[GradientVector],
) -> RunHistory {
    let hints = hints.to_vec();
    let mut provider = FnHints(move |t: usize, _: &optidelay::Observed| hints[t - 1].clone());
    run_linear(learner, stream, schedule, &mut provider)
}

pub fn run_linear<L: DelayedLearner + ?Sized, H: HintProvider + ?Sized>(
    learner: &mut L,
    stream: &[GradientVector],
    schedule: &DelaySchedule,
    hints: &mut H,
) -> RunHistory {
    let mut env = LinearEnvironment::new(stream.to_vec()).unwrap();
    run_protocol(learner, &mut env, schedule, stream.len(), hints).unwrap()
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn plays_gap(a: &[SimplexWeights], b: &[SimplexWeights]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| max_gap(x.as_slice(), y.as_slice())).fold(0.0, f64::max)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i as f64 + 1.0);
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected gradient with Nesterov momentum (extrapolated points are
/// projected too), backtracking on the Lipschitz estimate and gradient-based
/// restarts.
pub fn accelerated_projected_gradient<F, G, P>(f: F, grad: G, project: P, start: Vec<f64>, iters: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = project(&start);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut lipschitz = 1.0_f64;
    let mut still = 0;
    for _ in 0..iters {
        let g = grad(&y);
        let fy = f(&y);
        let next = loop {
            let cand = project(&y.iter().zip(&g).map(|(yi, gi)| yi - gi / lipschitz).collect::<Vec<_>>());
            let diff: Vec<f64> = cand.iter().zip(&y).map(|(c, yi)| c - yi).collect();
            let model = fy
                + g.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>()
                + 0.5 * lipschitz * diff.iter().map(|v| v * v).sum::<f64>();
            if f(&cand) <= model + 1e-15 * fy.abs().max(1.0) || lipschitz > 1e18 {
                break cand;
            }
            lipschitz *= 2.0;
        };
        let moved = max_gap(&next, &x);
        let restart: f64 = y.iter().zip(&next).zip(&x).map(|((yi, ni), xi)| (yi - ni) * (ni - xi)).sum();
        let next_momentum = if restart > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) };
        let beta = if restart > 0.0 { 0.0 } else { (momentum - 1.0) / next_momentum };
        y = project(&next.iter().zip(&x).map(|(ni, xi)| ni + beta * (ni - xi)).collect::<Vec<_>>());
        x = next;
        momentum = next_momentum;
        lipschitz *= 0.9;
        still = if moved < 1e-14 { still + 1 } else { 0 };
        if still >= 5 {
            break;
        }
    }
    x
}

/// One learner's regret against one vertex, next to its certificate.
#[derive(Debug, Clone)]
pub struct CertifiedRegret {
    pub learner: String,
    pub vertex: usize,
    pub regret: f64,
    pub certificate: f64,
}

impl CertifiedRegret {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.regret <= self.certificate + tolerance * self.certificate.abs().max(1.0)
    }
}

/// A seeded linear instance run through every learner with a certificate.
/// Dimension, horizon, delay, stream shape and hint strategy vary with `seed`.
pub fn certificate_instance(seed: u64) -> Vec<CertifiedRegret> {
    use optidelay::bounds::{regret_certificate, CertificateKind, RmNorm, RmVariant};
    use optidelay::closed_forms::{q_opt, PNormConfig};
    use optidelay::ftrl::{FtrlConfig, Odaftrl, Tuning};
    use optidelay::hinting::{ConstantHints, HintStrategy};
    use optidelay::omd::{RegretMatcher, RmConfig};

    let mut r = rng(seed);
    let d = r.gen_range(1..=6);
    let horizon = r.gen_range(1..=200);
    let delay = [0, 1, 3][seed as usize % 3];
    let schedule = DelaySchedule::constant(delay);
    let strategy =
        [HintStrategy::None, HintStrategy::RecentG, HintStrategy::PrevG, HintStrategy::MeanG][(seed as usize / 3) % 4];
    let leader = r.gen_range(0..d);
    let tilt = if seed.is_multiple_of(2) { 0.0 } else { r.gen_range(0.0..0.5) };
    let stream: Vec<GradientVector> = (0..horizon)
        .map(|_| {
            let v = (0..d).map(|j| r.gen_range(-1.0..1.0) - if j == leader { tilt } else { 0.0 }).collect();
            GradientVector::new(v).unwrap()
        })
        .collect();

    let mut out = Vec::new();
    let mut record = |name: String, hist: &RunHistory, kind: CertificateKind| {
        for i in 0..d {
            let u = SimplexWeights::vertex(d, i);
            out.push(CertifiedRegret {
                learner: name.clone(),
                vertex: i,
                regret: hist.linearized_regret(&u).unwrap(),
                certificate: regret_certificate(&kind, hist, &u).unwrap(),
            });
        }
    };

    let best_q = if d >= 2 { q_opt(d).unwrap() } else { 2.0 };
    for variant in [RmVariant::Dorm, RmVariant::DormPlus] {
        for q in [2.0, best_q] {
            let lambda = r.gen_range(0.1..10.0);
            let cfg = RmConfig::new(d, q, variant).unwrap().with_lambda(lambda).unwrap();
            let mut learner = RegretMatcher::new(cfg).unwrap();
            let mut hints = ConstantHints { strategy, space: learner.hint_space() };
            let hist = run_linear(&mut learner, &stream, &schedule, &mut hints);
            let pnorm = PNormConfig::new(q).unwrap();
            let mut norms = vec![RmNorm::Q, RmNorm::Max];
            if d >= 2 && q == best_q {
                norms.push(RmNorm::LogDim);
            }
            for norm in norms {
                let kind = CertificateKind::RegretMatching { variant, pnorm, norm };
                record(format!("{variant:?} q={q:.3} {norm:?}"), &hist, kind);
            }
        }
    }

    let alpha = FtrlConfig::default_alpha(d);
    let lambda = r.gen_range(0.05..20.0);
    let tunings = [
        (Tuning::Constant { lambda }, CertificateKind::ConstantFtrl { lambda }),
        (Tuning::Dub { alpha }, CertificateKind::Dub { alpha }),
        (Tuning::AdaHedgeD { alpha }, CertificateKind::AdaHedgeD { alpha }),
    ];
    for (tuning, kind) in tunings {
        let mut learner = Odaftrl::new(FtrlConfig { d, tuning }).unwrap();
        let mut hints = ConstantHints { strategy, space: learner.hint_space() };
        let hist = run_linear(&mut learner, &stream, &schedule, &mut hints);
        record(format!("{tuning:?}"), &hist, kind);
    }
    out
}
