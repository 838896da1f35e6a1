//! Per-instance checks shared by the test files and the acceptance suite.
//! Each returns the worst discrepancy it found.

use optidelay::bounds::RmVariant;
use optidelay::closed_forms::{negentropy_argmin, pnorm_orthant_argmin, PNormConfig};
use optidelay::ftrl::{oftrl_with_bad_hint, FtrlConfig, Odaftrl, Tuning};
use optidelay::omd::{OrthantDoomd, RegretMatcher, RmConfig};
use optidelay::vector::lp_norm;
use optidelay::{DelaySchedule, FeedbackQueue, GradientVector, SimplexWeights};
use rand::Rng;

use super::*;

fn softmax_play(theta: &[f64], lambda: f64) -> Vec<f64> {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| ((t - m) / lambda).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Shape of the delay-reduction instances: `d ∈ {2,3,5}`, `D ∈ {0,1,3}`, `T ≤ 40`.
fn reduction_shape(seed: u64) -> (usize, usize) {
    ([2, 3, 5][seed as usize % 3], [0, 1, 3][(seed as usize / 3) % 3])
}

/// Delayed FTRL against optimistic FTRL fed `h_t − Σ_{unseen} g_s`, both the
/// library reference and a direct softmax.
pub fn ftrl_bad_hint_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (d, delay) = reduction_shape(seed);
    let horizon = r.gen_range(1..=40);
    let lambda = r.gen_range(0.3..3.0);
    let stream = random_stream(&mut r, d, horizon, 1.0);
    let hints = random_stream(&mut r, d, horizon, 2.0);

    let mut learner = Odaftrl::new(FtrlConfig { d, tuning: Tuning::Constant { lambda } }).unwrap();
    let hist = run_with_hints(&mut learner, &stream, &DelaySchedule::constant(delay), &hints);
    let reference = oftrl_with_bad_hint(&stream, &hints, lambda, delay).unwrap();
    let mut gap = plays_gap(&hist.plays, &reference);

    let mut cumulative = vec![0.0; d];
    for t in 1..=horizon {
        let theta: Vec<f64> = (0..d)
            .map(|j| {
                let unseen: f64 = (t.saturating_sub(delay).max(1)..t).map(|s| stream[s - 1][j]).sum();
                -(cumulative[j] + hints[t - 1][j] - unseen)
            })
            .collect();
        gap = gap.max(max_gap(&softmax_play(&theta, lambda), hist.plays[t - 1].as_slice()));
        for j in 0..d {
            cumulative[j] += stream[t - 1][j];
        }
    }
    gap
}

/// Undelayed single-step optimistic mirror descent on the orthant, written
/// independently of the library step.
pub fn soomd_reference(stream: &[GradientVector], pseudo_hints: &[Vec<f64>], lambda: f64, q: f64) -> Vec<Vec<f64>> {
    let d = pseudo_hints[0].len();
    let p = q / (q - 1.0);
    let mut x: Vec<f64> = vec![0.0; d];
    let mut prev_hint = vec![0.0; d];
    let mut prev_g = vec![0.0; d];
    let mut out = Vec::new();
    for t in 0..pseudo_hints.len() {
        for j in 0..d {
            let base = if x[j] > 0.0 { x[j].powf(p - 1.0) } else { 0.0 };
            let v = base - (prev_g[j] + pseudo_hints[t][j] - prev_hint[j]) / lambda;
            x[j] = if v > 0.0 { v.powf(q - 1.0) } else { 0.0 };
        }
        out.push(x.clone());
        prev_hint = pseudo_hints[t].clone();
        prev_g = stream[t].as_slice().to_vec();
    }
    out
}

/// Plays of the orthant learner driven by a feedback queue.
pub fn orthant_plays(
    d: usize,
    q: f64,
    lambda: f64,
    schedule: DelaySchedule,
    stream: &[GradientVector],
    hints: &[GradientVector],
) -> Vec<Vec<f64>> {
    let mut doomd = OrthantDoomd::new(d, PNormConfig::new(q).unwrap(), lambda).unwrap();
    let mut queue = FeedbackQueue::new(schedule, d);
    let mut plays = Vec::new();
    for t in 1..=stream.len() {
        plays.push(doomd.play(&hints[t - 1]).unwrap());
        queue.push(t, stream[t - 1].clone()).unwrap();
        for (s, g) in queue.release(t) {
            doomd.receive(s, &g).unwrap();
        }
    }
    plays
}

/// Delayed orthant OMD against single-step OMD with the bad hint, relative
/// to the iterate scale.
pub fn omd_bad_hint_gap(seed: u64) -> f64 {
    let mut r = rng(1000 + seed);
    let (d, delay) = reduction_shape(seed);
    let horizon = r.gen_range(1..=40);
    let lambda = r.gen_range(0.3..3.0);
    let q = [2.0, 3.0, 4.5][seed as usize % 3];
    let stream = random_stream(&mut r, d, horizon, 1.0);
    let hints = random_stream(&mut r, d, horizon, 2.0);

    let plays = orthant_plays(d, q, lambda, DelaySchedule::constant(delay), &stream, &hints);
    let pseudo: Vec<Vec<f64>> = (1..=horizon)
        .map(|t| {
            (0..d)
                .map(|j| hints[t - 1][j] - (t.saturating_sub(delay).max(1)..t).map(|s| stream[s - 1][j]).sum::<f64>())
                .collect()
        })
        .collect();
    let reference = soomd_reference(&stream, &pseudo, lambda, q);
    plays
        .iter()
        .zip(&reference)
        .map(|(a, b)| max_gap(a, b) / b.iter().fold(1.0_f64, |m, x| m.max(x.abs())))
        .fold(0.0, f64::max)
}

/// Largest change in DORM and DORM+ plays across `λ ∈ {0.1, 1, 10}`.
pub fn lambda_independence_gap(seed: u64) -> f64 {
    let mut r = rng(3000 + seed);
    let d = r.gen_range(2..=6);
    let delay = r.gen_range(0..=3);
    let horizon = r.gen_range(5..=40);
    let q = [2.0, 3.0, 7.0][seed as usize % 3];
    let stream = random_stream(&mut r, d, horizon, 1.0);
    let hints = random_stream(&mut r, d, horizon, 1.0);
    let mut gap = 0.0_f64;
    for variant in [RmVariant::Dorm, RmVariant::DormPlus] {
        let plays: Vec<Vec<SimplexWeights>> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&lambda| {
                let cfg = RmConfig::new(d, q, variant).unwrap().with_lambda(lambda).unwrap();
                let mut rm = RegretMatcher::new(cfg).unwrap();
                run_with_hints(&mut rm, &stream, &DelaySchedule::constant(delay), &hints).plays
            })
            .collect();
        gap = gap.max(plays_gap(&plays[0], &plays[1])).max(plays_gap(&plays[2], &plays[1]));
    }
    gap
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / x.len() as f64; x.len()]
    }
}

fn regret(g: &GradientVector, w: &[f64]) -> Vec<f64> {
    let mixed: f64 = g.as_slice().iter().zip(w).map(|(a, b)| a * b).sum();
    g.as_slice().iter().map(|x| mixed - x).collect()
}

/// Rounds where undelayed, unhinted DORM (`q = 2`, `λ = 1`) or DORM+ differ
/// at all from textbook regret matching or regret matching+.
pub fn plain_regret_matching_mismatches(seed: u64) -> Vec<String> {
    let mut r = rng(4000 + seed);
    let d = r.gen_range(2..=6);
    let stream = random_stream(&mut r, d, 60, 1.0);
    let zeros = vec![GradientVector::zeros(d); stream.len()];
    let mut bad = Vec::new();

    let mut dorm = RegretMatcher::new(RmConfig::new(d, 2.0, RmVariant::Dorm).unwrap()).unwrap();
    let plays = run_with_hints(&mut dorm, &stream, &DelaySchedule::constant(0), &zeros).plays;
    let mut cum = vec![0.0; d];
    for (t, g) in stream.iter().enumerate() {
        let w = normalize(&cum.iter().map(|x: &f64| x.max(0.0)).collect::<Vec<_>>());
        if plays[t].as_slice() != w.as_slice() {
            bad.push(format!("RM round {}", t + 1));
        }
        for (c, x) in cum.iter_mut().zip(regret(g, &w)) {
            *c += x;
        }
    }

    let mut plus = RegretMatcher::new(RmConfig::new(d, 2.0, RmVariant::DormPlus).unwrap()).unwrap();
    let plays = run_with_hints(&mut plus, &stream, &DelaySchedule::constant(0), &zeros).plays;
    let mut acc = vec![0.0; d];
    for (t, g) in stream.iter().enumerate() {
        let w = normalize(&acc);
        if plays[t].as_slice() != w.as_slice() {
            bad.push(format!("RM+ round {}", t + 1));
        }
        for (a, x) in acc.iter_mut().zip(regret(g, &w)) {
            *a = (*a + x).max(0.0);
        }
    }
    bad
}

/// Learners whose plays (and tuning traces) differ at all between a constant
/// delay and the equivalent explicit reveal table.
pub fn explicit_table_mismatches(seed: u64) -> Vec<String> {
    let mut r = rng(5000 + seed);
    let d = r.gen_range(2..=5);
    let delay = r.gen_range(0..=4);
    let horizon = r.gen_range(1..=40);
    let stream = random_stream(&mut r, d, horizon, 1.0);
    let hints = random_stream(&mut r, d, horizon, 1.0);
    let constant = DelaySchedule::constant(delay);
    let table = DelaySchedule::explicit((1..=horizon).map(|t| Some(t + delay)).collect()).unwrap();
    let mut bad = Vec::new();
    let tunings = [Tuning::Constant { lambda: 0.7 }, Tuning::Dub { alpha: 1.3 }, Tuning::AdaHedgeD { alpha: 0.9 }];
    for tuning in tunings {
        let mut a = Odaftrl::new(FtrlConfig { d, tuning }).unwrap();
        let mut b = Odaftrl::new(FtrlConfig { d, tuning }).unwrap();
        let ha = run_with_hints(&mut a, &stream, &constant, &hints);
        let hb = run_with_hints(&mut b, &stream, &table, &hints);
        if ha.plays != hb.plays || ha.lambdas != hb.lambdas || ha.deltas != hb.deltas {
            bad.push(format!("{tuning:?}"));
        }
    }
    for variant in [RmVariant::Dorm, RmVariant::DormPlus] {
        let cfg = RmConfig::new(d, 2.5, variant).unwrap();
        let ha = run_with_hints(&mut RegretMatcher::new(cfg).unwrap(), &stream, &constant, &hints);
        let hb = run_with_hints(&mut RegretMatcher::new(cfg).unwrap(), &stream, &table, &hints);
        if ha.plays != hb.plays {
            bad.push(format!("{variant:?}"));
        }
    }
    if orthant_plays(d, 3.0, 1.0, constant, &stream, &hints) != orthant_plays(d, 3.0, 1.0, table, &stream, &hints) {
        bad.push("orthant".into());
    }
    bad
}

/// Closed-form entropic play against accelerated projected gradient on a
/// random instance drawn from `r`.
pub fn entropic_oracle_gap(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let d = r.gen_range(1..=6);
    let lambda = r.gen_range(0.5..2.0);
    let theta: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
    let objective = |w: &[f64]| -> f64 {
        w.iter().zip(&theta).map(|(x, t)| if *x > 0.0 { lambda * x * x.ln() - t * x } else { 0.0 }).sum()
    };
    let gradient = |w: &[f64]| -> Vec<f64> { w.iter().zip(&theta).map(|(x, t)| lambda * (x.ln() + 1.0) - t).collect() };
    // The optimum has every weight above e^{-8}/6, so a slightly truncated
    // simplex keeps the entropy smooth without moving the minimizer.
    let floor = 1e-7;
    let project = |v: &[f64]| -> Vec<f64> {
        let inner = project_simplex(&v.iter().map(|x| (x - floor) / (1.0 - d as f64 * floor)).collect::<Vec<_>>());
        inner.iter().map(|x| floor + (1.0 - d as f64 * floor) * x).collect()
    };
    let numeric = accelerated_projected_gradient(objective, gradient, project, vec![1.0 / d as f64; d], 200_000);
    max_gap(negentropy_argmin(&theta, lambda).as_slice(), &numeric)
}

/// Closed-form orthant argmin of `½‖w‖_p² − ⟨v, w⟩` against accelerated
/// projected gradient; `q` alternates between 2 and 3.
pub fn orthant_oracle_gap(r: &mut rand_chacha::ChaCha8Rng, case: usize) -> f64 {
    let d = r.gen_range(1..=6);
    let q = [2.0, 3.0][case % 2];
    let cfg = PNormConfig::new(q).unwrap();
    let p = cfg.p();
    let v: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
    let objective = |w: &[f64]| 0.5 * lp_norm(w, p).powi(2) - w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    let gradient = |w: &[f64]| -> Vec<f64> {
        let n = lp_norm(w, p);
        w.iter()
            .zip(&v)
            .map(|(x, vj)| if n > 0.0 && *x > 0.0 { n.powf(2.0 - p) * x.powf(p - 1.0) - vj } else { -vj })
            .collect()
    };
    let start: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let numeric =
        accelerated_projected_gradient(objective, gradient, |w| w.iter().map(|x| x.max(0.0)).collect(), start, 200_000);
    max_gap(&pnorm_orthant_argmin(&v, cfg), &numeric)
}

/// Violations of the AdaHedgeD tuning invariants on a random run with random
/// hints: `δ ≥ 0`, `δ ≤ min(b/λ, a)`, non-decreasing `λ`, and `α·λ = Σδ` once
/// all feedback is in.
pub fn adahedged_violations(seed: u64) -> Vec<String> {
    let mut r = rng(7000 + seed);
    let d = r.gen_range(1..=6);
    let delay = [0, 1, 3][seed as usize % 3];
    let horizon = r.gen_range(1..=200);
    let alpha = r.gen_range(0.1..3.0);
    let stream = random_stream(&mut r, d, horizon, 1.0);
    let hints = random_stream(&mut r, d, horizon, 2.0);
    let mut learner = Odaftrl::new(FtrlConfig { d, tuning: Tuning::AdaHedgeD { alpha } }).unwrap();
    let hist = run_with_hints(&mut learner, &stream, &DelaySchedule::constant(delay), &hints);

    let mut bad = Vec::new();
    let mut prev = 0.0;
    for (t, rec) in learner.trace().iter().enumerate() {
        let cap = if rec.lambda > 0.0 { (rec.terms.b / rec.lambda).min(rec.terms.a) } else { rec.terms.a };
        if rec.delta < 0.0 || rec.delta > cap + 1e-9 {
            bad.push(format!("round {}: delta {} outside [0, {cap}]", t + 1, rec.delta));
        }
        if rec.lambda < prev {
            bad.push(format!("round {}: lambda decreased", t + 1));
        }
        prev = rec.lambda;
    }
    if hist.lambdas.windows(2).any(|p| p[1] < p[0]) {
        bad.push("logged lambdas decrease".into());
    }
    let total: f64 = hist.deltas.iter().sum();
    if (alpha * learner.next_lambda() - total).abs() > 1e-12 * total.max(1e-300) {
        bad.push(format!("alpha * lambda = {} but delta sum = {total}", alpha * learner.next_lambda()));
    }
    bad
}

/// Largest regularization weight AdaHedgeD ever uses when every hint is the
/// exact sum of the gradients it has not seen.
pub fn perfect_hint_max_lambda(seed: u64) -> f64 {
    use optidelay::protocol::FnHints;
    use optidelay::vector::window_sum;
    let mut r = rng(8000 + seed);
    let d = r.gen_range(1..=6);
    let delay = [0, 1, 3][seed as usize % 3];
    let horizon = r.gen_range(1..=200);
    let stream = random_stream(&mut r, d, horizon, 1.0);
    let full = stream.clone();
    let mut hints =
        FnHints(move |t: usize, seen: &optidelay::Observed| window_sum(&full, seen.last() as isize + 1, t as isize, d));
    let mut learner =
        Odaftrl::new(FtrlConfig { d, tuning: Tuning::AdaHedgeD { alpha: FtrlConfig::default_alpha(d) } }).unwrap();
    let hist = run_linear(&mut learner, &stream, &DelaySchedule::constant(delay), &mut hints);
    hist.lambdas.iter().copied().chain([learner.next_lambda()]).fold(0.0, f64::max)
}

fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], j: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[j] += h;
    down[j] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

/// Relative gap between the hinting-loss subgradient and central differences
/// on a random instance, or `None` when the instance sits near a kink.
pub fn hinting_subgradient_gap(r: &mut rand_chacha::ChaCha8Rng, q: f64) -> Option<f64> {
    use optidelay::hinting::{hinting_loss, hinting_loss_subgradient, HintMatrix};
    let d = r.gen_range(2..=6);
    let m = r.gen_range(1..=4);
    let columns = (0..m).map(|_| random_vector(r, d, 2.0)).collect();
    let h = HintMatrix::new(columns).unwrap();
    let target = random_vector(r, d, 2.0);
    let scale = r.gen_range(0.1..3.0);
    let raw: Vec<f64> = (0..m).map(|_| r.gen_range(0.05..1.0)).collect();
    let omega: Vec<f64> = raw.iter().map(|x| x / raw.iter().sum::<f64>()).collect();

    let mu: Vec<f64> =
        h.combine(&omega).unwrap().as_slice().iter().zip(target.as_slice()).map(|(a, b)| a - b).collect();
    let mut sorted: Vec<f64> = mu.iter().map(|x| x.abs()).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[0] < 1e-2 || (q.is_infinite() && sorted[0] - sorted[1] < 1e-2) {
        return None;
    }
    let analytic = hinting_loss_subgradient(&omega, &h, &target, scale, q).unwrap();
    let gap = (0..m)
        .map(|j| {
            let numeric = central_difference(|w| hinting_loss(w, &h, &target, scale, q).unwrap(), &omega, j, 1e-6);
            (analytic[j] - numeric).abs() / analytic[j].abs().max(1.0)
        })
        .fold(0.0, f64::max);
    Some(gap)
}

/// Candidate columns for a gradient-space base: the exact missing sum, and
/// three copies shifted by fixed nonnegative offsets plus noise.
pub fn exact_and_noisy_columns(stream: &[GradientVector], seed: u64) -> Vec<Box<dyn optidelay::HintProvider>> {
    use optidelay::protocol::FnHints;
    use optidelay::vector::window_sum;
    use optidelay::Observed;
    use rand_distr::{Distribution, Normal};
    let d = stream[0].dim();
    let exact = stream.to_vec();
    let mut columns: Vec<Box<dyn optidelay::HintProvider>> =
        vec![Box::new(FnHints(move |t: usize, seen: &Observed| {
            window_sum(&exact, seen.last() as isize + 1, t as isize, d)
        }))];
    for k in 1..4u64 {
        let truth = stream.to_vec();
        let mut r = rng(seed * 10 + k);
        let offset: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..1.0) * k as f64).collect();
        let noise = Normal::new(0.0, 0.3).unwrap();
        columns.push(Box::new(FnHints(move |t: usize, seen: &Observed| {
            let exact = window_sum(&truth, seen.last() as isize + 1, t as isize, d);
            let v = exact.as_slice().iter().zip(&offset).map(|(x, o)| x + o + noise.sample(&mut r)).collect();
            GradientVector::new(v).unwrap()
        })));
    }
    columns
}

/// Final weight the learned hinter puts on the exact column among four,
/// after 200 rounds at delay 1 with an AdaHedgeD base over `d = 4` experts.
pub fn exact_column_weight(seed: u64) -> f64 {
    use optidelay::hinting::{AdaptiveHinter, BaseAdapter};
    let d = 4;
    let stream = random_stream(&mut rng(seed), d, 200, 1.0);
    let mut hinter = AdaptiveHinter::new(exact_and_noisy_columns(&stream, seed), BaseAdapter::Ftrl).unwrap();
    let mut learner =
        Odaftrl::new(FtrlConfig { d, tuning: Tuning::AdaHedgeD { alpha: FtrlConfig::default_alpha(d) } }).unwrap();
    run_linear(&mut learner, &stream, &DelaySchedule::constant(1), &mut hinter);
    hinter.weights().last().unwrap()[0]
}

/// Columns whose hint regret exceeds either hint-learner certificate on a
/// random run over fixed strategies, with a DORM+ base on odd seeds and an
/// AdaHedgeD base otherwise.
pub fn hint_certificate_violations(seed: u64) -> Vec<String> {
    use optidelay::hinting::{AdaptiveHinter, BaseAdapter, HintStrategy};
    use optidelay::DelayedLearner;
    let mut r = rng(3000 + seed);
    let d = r.gen_range(2..=5);
    let delay = [0, 1, 3][seed as usize % 3];
    let horizon = r.gen_range(1..=150);
    let stream = random_stream(&mut r, d, horizon, 1.0);
    let all =
        [HintStrategy::RecentG, HintStrategy::PrevG, HintStrategy::MeanG, HintStrategy::MeanGPlain, HintStrategy::None];
    let m = r.gen_range(1..=all.len());
    let start = r.gen_range(0..all.len());
    let chosen: Vec<HintStrategy> = (0..m).map(|i| all[(start + i) % all.len()]).collect();
    let (mut learner, base): (Box<dyn DelayedLearner>, _) = if seed % 2 == 1 {
        let q = 2.0 + r.gen_range(0.0..2.0);
        (
            Box::new(RegretMatcher::new(RmConfig::new(d, q, RmVariant::DormPlus).unwrap()).unwrap()),
            BaseAdapter::RegretMatching { q },
        )
    } else {
        (Box::new(Odaftrl::new(FtrlConfig { d, tuning: Tuning::AdaHedgeD { alpha: 1.0 } }).unwrap()), BaseAdapter::Ftrl)
    };
    let mut hinter = AdaptiveHinter::from_strategies(&chosen, base).unwrap();
    run_linear(&mut learner, &stream, &DelaySchedule::constant(delay), &mut hinter);

    let mut bad = Vec::new();
    if hinter.subgradients().len() != horizon {
        bad.push(format!("{} of {horizon} rounds got meta-feedback", hinter.subgradients().len()));
    }
    let certificate = hinter.certificate().unwrap();
    let loose = hinter.subgradient_certificate().unwrap();
    let tol = 1e-8 * certificate.max(1.0);
    for j in 0..m {
        let regret = hinter.hint_regret(j);
        if regret > certificate + tol || regret > loose + tol {
            bad.push(format!("column {j}: regret {regret} vs certificates {certificate}, {loose}"));
        }
    }
    bad
}
