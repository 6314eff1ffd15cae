//! Checks shared by the oracle tests and the acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use replay_scope::agent::select_action;
use replay_scope::env::{
    initial_state, transition, Action, CarState, MountainCar, MAX_EPISODE_STEPS, MAX_POSITION,
    MIN_POSITION,
};
use replay_scope::nn::{td_loss_and_grad, xavier_init, MlpParams, Scratch};
use replay_scope::optim::{adam_step, AdamConfig, AdamState};
use replay_scope::replay::{ReplayBuffer, Transition};
use replay_scope::stats::{
    aggregate_at, howe_factor, mean_ci_band, t_multiplier, tolerance_band, CenterKind,
    PerformanceCurve, ToleranceMethod,
};

/// Outcome of one check, with a one-line description of what was measured.
#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    /// All parts must pass; details are joined.
    pub fn all(parts: Vec<Check>) -> Self {
        let pass = parts.iter().all(|c| c.pass);
        let detail = parts
            .iter()
            .map(|c| {
                if c.pass {
                    c.detail.clone()
                } else {
                    format!("FAILED {}", c.detail)
                }
            })
            .collect::<Vec<_>>()
            .join("; ");
        Self { pass, detail }
    }
}

/// Upper-tail p-value of Pearson's statistic against equal expected counts.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("positive dof");
    1.0 - dist.cdf(stat)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------------------
// environment

pub fn env_examples() -> Check {
    let tol = 1e-12;
    let third = -std::f64::consts::PI / 6.0;
    let s = transition(CarState::new(third, 0.0), Action::Coast);
    let fixed = close(s.velocity, 0.0, tol) && close(s.position, third, tol);

    // computed independently in double precision:
    // v' = 0.001 + cos(-1.5) * -0.0025, p' = -0.5 + v'
    let pushed = transition(CarState::new(-0.5, 0.0), Action::Right);
    let push = close(pushed.velocity, 0.000_823_156_995_830_742_8, tol)
        && close(pushed.position, -0.499_176_843_004_169_26, tol);

    // raw position -1.238725928681605 lies left of the wall
    let s = transition(CarState::new(-1.19, -0.05), Action::Left);
    let wall = s.position == MIN_POSITION && s.velocity == 0.0;

    Check::all(vec![
        Check::new(fixed, "zero-force fixed point"),
        Check::new(push, format!("push from -0.5 gives ({:.15}, {:.15})", pushed.position, pushed.velocity)),
        Check::new(wall, "left wall clips position and zeroes velocity"),
    ])
}

pub fn env_fuzz(steps: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = MountainCar::new();
    env.reset(rng.random());
    let (mut violations, mut episodes, mut cutoffs) = (0usize, 0usize, 0usize);
    for _ in 0..steps {
        let action = Action::ALL[rng.random_range(0..Action::COUNT)];
        let r = env.step(action).expect("episode is live");
        let s = r.next_state;
        if !s.in_bounds() || s.position > MAX_POSITION || env.episode_steps() > MAX_EPISODE_STEPS {
            violations += 1;
        }
        if r.truncated && (env.episode_steps() != MAX_EPISODE_STEPS || r.terminated) {
            violations += 1;
        }
        if !r.done() && env.episode_steps() >= MAX_EPISODE_STEPS {
            violations += 1;
        }
        if r.done() {
            episodes += 1;
            cutoffs += usize::from(r.truncated);
            env.reset(rng.random());
        }
    }
    Check::new(
        violations == 0 && episodes > 0,
        format!("{steps}-step fuzz: {violations} violations over {episodes} episodes ({cutoffs} cut off)"),
    )
}

pub fn reset_uniformity() -> Check {
    let mut counts = [0u64; 10];
    for seed in 0..10_000u64 {
        let s = initial_state(seed);
        let bin = (((s.position + 0.6) / 0.2 * 10.0).floor() as usize).min(9);
        counts[bin] += 1;
    }
    let p = chi_square_uniform_p(&counts);
    Check::new(p > 0.01, format!("reset positions chi-square p = {p:.4}"))
}

// ---------------------------------------------------------------------------
// network and optimiser

/// Double-double number: an unevaluated sum `hi + lo` carrying about 106 bits.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Dd) -> Self {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (o.hi - bb);
        Dd::renorm(s, err + self.lo + o.lo)
    }

    fn sub(self, o: Dd) -> Self {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    fn mul(self, o: Dd) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn relu(self) -> Self {
        if self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0) {
            self
        } else {
            Dd::from(0.0)
        }
    }
}

/// Loss of the batch evaluated in double-double arithmetic, written directly
/// from the layer definitions rather than through the crate's kernels.
fn reference_loss(params: &MlpParams, states: &[CarState], actions: &[Action], targets: &[f64]) -> Dd {
    let layer = |l: usize, input: &[Dd], relu: bool| -> Vec<Dd> {
        let view = params.layer(l);
        (0..view.fan_out)
            .map(|j| {
                let mut z = Dd::from(view.biases[j]);
                for (i, x) in input.iter().enumerate() {
                    z = z.add(x.mul(Dd::from(view.weights[i * view.fan_out + j])));
                }
                if relu {
                    z.relu()
                } else {
                    z
                }
            })
            .collect()
    };
    let mut total = Dd::from(0.0);
    for ((s, a), &y) in states.iter().zip(actions).zip(targets) {
        let x = [Dd::from(s.position), Dd::from(s.velocity)];
        let q = layer(2, &layer(1, &layer(0, &x, true), true), false);
        let r = q[a.index()].sub(Dd::from(y));
        total = total.add(r.mul(r));
    }
    let inv = 1.0 / states.len() as f64;
    total.mul(Dd::from(inv))
}

/// Largest relative error between analytic and central-difference gradients
/// (`h = 1e-6`). Differences are taken in double precision first; entries too
/// small for that to resolve are re-evaluated with the double-double loss.
pub fn gradient_oracle(draws: usize, seed: u64) -> Check {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let (mut compared, mut refined) = (0usize, 0usize);
    for _ in 0..draws {
        let mut params = xavier_init(rng.random());
        // non-zero biases so every branch of the backward pass is exercised
        for l in 0..3 {
            for b in params.layer_mut(l).1.iter_mut() {
                *b = rng.random_range(-0.3..0.3);
            }
        }
        let batch = 8;
        let states: Vec<CarState> = (0..batch)
            .map(|_| CarState::new(rng.random_range(-1.2..0.6), rng.random_range(-0.07..0.07)))
            .collect();
        let actions: Vec<Action> = (0..batch)
            .map(|_| Action::ALL[rng.random_range(0..3)])
            .collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-5.0..1.0)).collect();
        let analytic = td_loss_and_grad(&params, &states, &actions, &targets)
            .expect("valid batch")
            .grads;
        let loss_at = |p: &MlpParams| {
            td_loss_and_grad(p, &states, &actions, &targets)
                .expect("valid batch")
                .loss
        };
        for i in 0..params.len() {
            let base = params.as_slice()[i];
            let (plus, minus) = (base + H, base - H);
            params.as_mut_slice()[i] = plus;
            let up = loss_at(&params);
            params.as_mut_slice()[i] = minus;
            let down = loss_at(&params);
            let mut numeric = (up - down) / (plus - minus);
            let a = analytic.as_slice()[i];
            let rel = |n: f64| (a - n).abs() / a.abs().max(n.abs());
            if a != numeric && rel(numeric) > TOL {
                let down_ref = reference_loss(&params, &states, &actions, &targets);
                params.as_mut_slice()[i] = plus;
                let up_ref = reference_loss(&params, &states, &actions, &targets);
                numeric = up_ref.sub(down_ref).hi / (plus - minus);
                refined += 1;
            }
            params.as_mut_slice()[i] = base;
            // both exactly zero: a dead unit, nothing to compare
            if a != 0.0 || numeric != 0.0 {
                worst = worst.max(rel(numeric));
                compared += 1;
            }
        }
    }
    Check::new(
        worst < TOL,
        format!(
            "{compared} gradient entries over {draws} draws ({refined} in double-double), \
             max relative error {worst:.2e}"
        ),
    )
}

fn adam_trace(theta0: f64, gradients: &[f64]) -> Vec<f64> {
    let mut params = MlpParams::zeros(1, 1).expect("valid shape");
    params.fill(theta0);
    let mut grads = MlpParams::zeros_like(&params);
    let mut state = AdamState::new(&params);
    let cfg = AdamConfig::default();
    let mut out = Vec::new();
    for &g in gradients {
        grads.fill(g);
        adam_step(&mut params, &grads, &mut state, &cfg).expect("finite gradient");
        assert!(params.as_slice().iter().all(|&p| p == params.as_slice()[0]));
        out.push(params.as_slice()[0]);
    }
    out
}

pub fn adam_oracle() -> Check {
    // two-step traces iterated by hand in double precision, independently of this crate
    let cases: [(f64, [f64; 2], [f64; 2]); 2] = [
        (0.0, [1.0, 1.0], [-0.000_999_999_990_000_000_3, -0.001_999_999_979_999_993]),
        (0.25, [0.5, -2.0], [0.249_000_000_02, 0.249_559_503_510_200_56]),
    ];
    let mut worst = 0.0f64;
    for (theta0, grads, expected) in cases {
        let got = adam_trace(theta0, &grads);
        for (g, e) in got.iter().zip(expected) {
            worst = worst.max((g - e).abs());
        }
    }
    Check::new(worst <= 1e-12, format!("two-step traces, max abs error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// statistics

/// Student-t 0.975 quantile for two degrees of freedom in closed form.
fn t_two_dof() -> f64 {
    let p = 0.975f64;
    (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt()
}

pub fn t_and_howe_constants() -> Check {
    let t = t_multiplier(30, 0.05).expect("valid");
    let k = howe_factor(30, 0.05, 0.9).expect("valid");
    // high-precision references: t_{0.975, 29} and 1.6449 * sqrt(29 (31/30) / chi2_{0.05, 29})
    let t_ref = 2.045_229_642_132_704_3;
    let k_ref = 2.139_721_390_673_395_6;
    Check::all(vec![
        Check::new(
            format!("{t:.3}") == "2.045" && close(t, t_ref, 1e-9),
            format!("t(30) = {t:.6}"),
        ),
        Check::new(
            format!("{k:.3}") == "2.140" && close(k, k_ref, 1e-9),
            format!("Howe(30, 0.05, 0.9) = {k:.6}"),
        ),
    ])
}

pub fn three_run_ci() -> Check {
    let curves = vec![
        PerformanceCurve(vec![-10.0, -20.0]),
        PerformanceCurve(vec![-12.0, -26.0]),
        PerformanceCurve(vec![-17.0, -23.0]),
    ];
    let t = t_two_dof();
    // step 0: mean -13, deviations (3, 1, -4), variance 13
    // step 1: mean -23, deviations (3, -3, 0), variance 9
    // aggregates (-15, -19, -20): mean -18, deviations (3, -1, -2), variance 7
    let band = mean_ci_band(&curves, 0.05).expect("three runs");
    let step_hw = [t * (13.0f64 / 3.0).sqrt(), t * (9.0f64 / 3.0).sqrt()];
    let agg = aggregate_at(&curves, 0.05).expect("three runs");
    let agg_hw = t * (7.0f64 / 3.0).sqrt();
    let mut worst = 0.0f64;
    for (k, (m, hw)) in [(-13.0, step_hw[0]), (-23.0, step_hw[1])].into_iter().enumerate() {
        worst = worst
            .max((band.center[k] - m).abs())
            .max((band.lower[k] - (m - hw)).abs())
            .max((band.upper[k] - (m + hw)).abs());
    }
    worst = worst
        .max((agg.grand_mean + 18.0).abs())
        .max((agg.ci_half_width.unwrap_or(f64::NAN) - agg_hw).abs());
    Check::new(worst <= 1e-12, format!("3-run CI, max abs error {worst:.1e}"))
}

/// Fraction of repetitions whose parametric tolerance interval contains at least
/// `beta` of the sampling population. Content is evaluated exactly with the
/// normal CDF rather than estimated from held-out draws.
pub fn tolerance_coverage(reps: usize, runs: usize, seed: u64) -> (usize, f64) {
    let (alpha, beta) = (0.05, 0.9);
    let normal = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = 0;
    for _ in 0..reps {
        let curves: Vec<PerformanceCurve> = (0..runs)
            .map(|_| PerformanceCurve(vec![StandardNormal.sample(&mut rng)]))
            .collect();
        let band = tolerance_band(&curves, alpha, beta, CenterKind::Mean, ToleranceMethod::Parametric)
            .expect("valid sample");
        let content = normal.cdf(band.upper[0]) - normal.cdf(band.lower[0]);
        if content >= beta {
            covered += 1;
        }
    }
    (covered, covered as f64 / reps as f64)
}

pub fn tolerance_coverage_check() -> Check {
    let (covered, frac) = tolerance_coverage(1000, 500, 42);
    Check::new(
        frac >= 0.95,
        format!("tolerance content >= 90% in {covered}/1000 repetitions (R = 500, need >= 950)"),
    )
}

pub fn gaussian_histogram() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let values: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt();
    let bins = replay_scope::stats::performance_histogram(&values, 10).expect("non-empty");
    let mode = (0..bins.len()).max_by_key(|&i| (bins[i].count, std::cmp::Reverse(i))).expect("bins");
    let rising = bins[..=mode].windows(2).all(|w| w[0].count <= w[1].count);
    let falling = bins[mode..].windows(2).all(|w| w[0].count >= w[1].count);
    let centre = (bins[mode].left + bins[mode].right) / 2.0;
    let counts: Vec<usize> = bins.iter().map(|b| b.count).collect();
    Check::new(
        rising && falling && (centre - mean).abs() <= 0.5 * sd,
        format!("Gaussian histogram counts {counts:?}, mode centre {centre:.3}, mean {mean:.3}, sd {sd:.3}"),
    )
}

// ---------------------------------------------------------------------------
// replay and exploration

fn tagged(k: usize) -> Transition {
    Transition {
        state: CarState::new(-0.5, 0.0),
        action: Action::Coast,
        reward: -1.0,
        next_state: CarState::new(k as f64, 0.0),
        terminal: false,
    }
}

fn tag(t: &Transition) -> usize {
    t.next_state.position as usize
}

pub fn replay_sampling_uniformity() -> Check {
    let mut buffer = ReplayBuffer::new(100).expect("positive capacity");
    for k in 0..100 {
        buffer.push(tagged(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut counts = [0u64; 100];
    for t in buffer.sample(100_000, &mut rng).expect("non-empty") {
        counts[tag(&t)] += 1;
    }
    let p = chi_square_uniform_p(&counts);
    Check::new(p > 0.01, format!("100,000 draws over 100 entries, chi-square p = {p:.4}"))
}

pub fn replay_fifo(capacity: usize, extra: usize) -> Check {
    let mut buffer = ReplayBuffer::new(capacity).expect("positive capacity");
    for k in 0..capacity + extra {
        buffer.push(tagged(k));
    }
    let tags: Vec<usize> = buffer.iter().map(tag).collect();
    let expected: Vec<usize> = (extra..capacity + extra).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let evicted_never_sampled = buffer
        .sample(20_000, &mut rng)
        .expect("non-empty")
        .iter()
        .all(|t| tag(t) >= extra);
    Check::new(
        buffer.len() == capacity && tags == expected && evicted_never_sampled,
        format!("{} pushes into capacity {capacity}: oldest {extra} evicted", capacity + extra),
    )
}

pub fn exploration_uniformity() -> Check {
    let params = xavier_init(3);
    let mut scratch = Scratch::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let state = CarState::new(-0.5, 0.0);
    let mut counts = [0u64; 3];
    for _ in 0..30_000 {
        let a = select_action(&params, &state, 1.0, &mut rng, &mut scratch).expect("finite state");
        counts[a.index()] += 1;
    }
    let p = chi_square_uniform_p(&counts);
    Check::new(p > 0.01, format!("epsilon = 1 actions {counts:?}, chi-square p = {p:.4}"))
}
