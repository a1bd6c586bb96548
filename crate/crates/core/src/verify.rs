//! Property suites that check the library against exact identities and
//! independent recomputations. Each suite yields a machine-readable report.

use crate::costs::{
    check_condition, check_condition_exhaustive, cost_bound, decomposition_gap, for_each_pair,
    label_weights, ConditionReport, CostFunction, CostKind, LabelOrder,
};
use crate::eval::{expected_regret, reference_from_log, regret_bound};
use crate::learners::{decode, Algorithm, Learner, LearnerConfig, LearnerError};
use crate::linalg::{
    orthonormalize_rows, project_capped_simplex, spd_inverse, symmetric_eigen, DenseMatrix,
};
use crate::online_pca::{CappedMsg, LearningRate, ProjectionMatrix};
use crate::regressor::{sherman_morrison_update, RegressorError, RidgeCore};
use crate::rng::{substream, Purpose, StreamRng};
use crate::synthetic::{planted_subspace, PlantedConfig};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt;
use std::str::FromStr;

pub const LEMMA1_TOLERANCE: f64 = 1e-10;
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-12;
pub const RIDGE_TOLERANCE: f64 = 1e-8;
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
pub const DENSE_ORACLE_TOLERANCE: f64 = 1e-7;
pub const GRID_TOLERANCE: f64 = 1e-5;
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Lemma1,
    Lemma3,
    Sherman,
    Projection,
    Bounds,
    Regret,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Lemma1,
        Suite::Lemma3,
        Suite::Sherman,
        Suite::Projection,
        Suite::Bounds,
        Suite::Regret,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma3 => "lemma3",
            Suite::Sherman => "sherman",
            Suite::Projection => "projection",
            Suite::Bounds => "bounds",
            Suite::Regret => "regret",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.as_str()).collect();
                format!("unknown suite '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerifyOptions {
    /// Restricts the cost suites to one cost.
    pub cost: Option<CostKind>,
    /// Overrides the suite's main trial count: states for `lemma1`,
    /// condition probes for `lemma3`, random triples for `bounds`.
    pub trials: Option<usize>,
    pub seed: u64,
}

impl VerifyOptions {
    fn costs(&self) -> Vec<CostKind> {
        match self.cost {
            Some(c) => vec![c],
            None => CostKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Inputs of the worst case, present on failure.
    pub witness: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    fn new(suite: Suite, properties: Vec<PropertyResult>) -> Self {
        SuiteReport {
            suite,
            passed: properties.iter().all(|p| p.passed),
            properties,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Tracks the largest error of one property and the witness producing it.
struct Probe {
    name: String,
    tolerance: f64,
    checked: usize,
    max_error: f64,
    witness: Option<Value>,
    failed: bool,
}

impl Probe {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Probe {
            name: name.into(),
            tolerance,
            checked: 0,
            max_error: 0.0,
            witness: None,
            failed: false,
        }
    }

    fn observe(&mut self, error: f64, witness: impl FnOnce() -> Value) {
        self.checked += 1;
        let bad = error.is_nan() || error > self.tolerance;
        // NaN counts as the worst error seen
        let worst = error.is_nan() || error > self.max_error;
        if worst {
            self.max_error = error;
        }
        if bad && (worst || self.witness.is_none()) {
            self.witness = Some(witness());
        }
        self.failed |= bad;
    }

    fn fail(&mut self, witness: Value) {
        self.checked += 1;
        self.failed = true;
        self.max_error = f64::INFINITY;
        self.witness.get_or_insert(witness);
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name,
            passed: !self.failed,
            checked: self.checked,
            max_error: self.max_error,
            tolerance: self.tolerance,
            witness: if self.failed { self.witness } else { None },
        }
    }
}

fn from_condition(name: &str, report: ConditionReport) -> PropertyResult {
    let worst = report
        .witnesses
        .iter()
        .map(|w| -w.difference)
        .fold(0.0, f64::max);
    PropertyResult {
        name: format!("{name}/{}", report.cost),
        passed: report.passed(),
        checked: report.trials,
        max_error: worst,
        tolerance: crate::costs::CONDITION_SLACK,
        witness: report
            .witnesses
            .first()
            .map(|w| json!({"violations": report.violation_count, "first": w})),
    }
}

fn gaussian(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// A random `rows x cols` matrix with orthonormal rows.
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut StreamRng) -> DenseMatrix {
    assert!(rows <= cols);
    loop {
        let mut m =
            DenseMatrix::from_vec(rows, cols, gaussian(rows * cols, rng)).expect("shape matches");
        if orthonormalize_rows(&mut m) == 0 {
            return m;
        }
    }
}

fn random_labels(k: usize, rng: &mut StreamRng) -> Vec<i8> {
    let rate: f64 = rng.random();
    (0..k)
        .map(|_| if rng.random::<f64>() < rate { 1 } else { -1 })
        .collect()
}

fn random_order(k: usize, rng: &mut StreamRng) -> LabelOrder {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..k).collect();
    v.shuffle(rng);
    LabelOrder::new(v).expect("a permutation")
}

/// A random feasible Capped MSG state with `1 <= M < K`.
pub fn random_state(k: usize, m: usize, rng: &mut StreamRng) -> CappedMsg {
    let q = random_orthonormal(m + 1, k, rng);
    let raw: Vec<f64> = (0..=m).map(|_| rng.random_range(-0.5..1.5)).collect();
    let sigma = project_capped_simplex(&raw, m as f64).expect("feasible budget");
    CappedMsg::from_parts(q, sigma, LearningRate::Default).expect("valid parts")
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> SuiteReport {
    match suite {
        Suite::Lemma1 => lemma1(opts),
        Suite::Lemma3 => lemma3(opts),
        Suite::Sherman => sherman_with(sherman_morrison_update, opts),
        Suite::Projection => projection(opts),
        Suite::Bounds => bounds(opts),
        Suite::Regret => regret(opts),
    }
}

/// The sampler's expected projector equals `U`.
pub fn lemma1(opts: &VerifyOptions) -> SuiteReport {
    let mut rng = substream(opts.seed, Purpose::Verify);
    let states = opts.trials.unwrap_or(100);
    let mut energy = Probe::new("expected_reconstruction_error", LEMMA1_TOLERANCE);
    let mut projector = Probe::new("expected_projector", LEMMA1_TOLERANCE);
    let mut mass = Probe::new("sampler_probabilities", LEMMA1_TOLERANCE);
    for _ in 0..states {
        let k = rng.random_range(2..=30);
        let m = rng.random_range(1..=8.min(k - 1));
        let state = random_state(k, m, &mut rng);
        let u = state.u_matrix();

        let total: f64 = state.enumerate_projections().map(|(p, _)| p).sum();
        mass.observe((total - 1.0).abs(), || json!({"sigma": state.sigma()}));

        let mut expected = DenseMatrix::zeros(k, k);
        for (p, proj) in state.enumerate_projections() {
            let outer = proj.outer();
            for (e, o) in expected.as_mut_slice().iter_mut().zip(outer.as_slice()) {
                *e += p * o;
            }
        }
        projector.observe(
            expected.max_abs_diff(&u),
            || json!({"k": k, "m": m, "sigma": state.sigma()}),
        );

        for _ in 0..20 {
            let y = gaussian(k, &mut rng);
            let enumerated: f64 = state
                .enumerate_projections()
                .map(|(p, proj)| p * proj.reconstruction_error(&y))
                .sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let direct = yy - crate::linalg::dot(&y, &u.mul_vec(&y));
            energy.observe(
                (enumerated - direct).abs(),
                || json!({"k": k, "m": m, "y": y, "enumerated": enumerated, "direct": direct}),
            );
        }
    }
    SuiteReport::new(
        Suite::Lemma1,
        vec![energy.finish(), projector.finish(), mass.finish()],
    )
}

/// The weighted-Hamming decomposition of each cost and its monotonicity
/// condition.
pub fn lemma3(opts: &VerifyOptions) -> SuiteReport {
    let mut rng = substream(opts.seed, Purpose::Verify);
    let trials = opts.trials.unwrap_or(100_000);
    let mut properties = Vec::new();
    for cost in opts.costs() {
        let mut exhaustive = Probe::new(
            format!("decomposition_exhaustive/{cost}"),
            DECOMPOSITION_TOLERANCE,
        );
        for k in [3, 4] {
            let orders = [LabelOrder::native(k), random_order(k, &mut rng)];
            for order in &orders {
                for_each_pair(k, |y, y_hat| {
                    let gap = decomposition_gap(&cost, y, y_hat, order).unwrap_or(f64::INFINITY);
                    exhaustive.observe(
                        gap,
                        || json!({"y": y, "y_hat": y_hat, "order": order.as_slice()}),
                    );
                });
            }
            properties.push(from_condition(
                &format!("condition_exhaustive_k{k}"),
                check_condition_exhaustive(&cost, k, &orders),
            ));
        }
        properties.push(exhaustive.finish());

        let mut random = Probe::new(
            format!("decomposition_random/{cost}"),
            DECOMPOSITION_TOLERANCE,
        );
        for _ in 0..10_000 {
            let k = rng.random_range(1..=12);
            let y = random_labels(k, &mut rng);
            let y_hat = random_labels(k, &mut rng);
            let order = random_order(k, &mut rng);
            let gap = decomposition_gap(&cost, &y, &y_hat, &order).unwrap_or(f64::INFINITY);
            random.observe(
                gap,
                || json!({"y": y, "y_hat": y_hat, "order": order.as_slice()}),
            );
        }
        properties.push(random.finish());

        // spread the probe over K = 2..=12
        let mut merged: Option<ConditionReport> = None;
        let sizes: Vec<usize> = (2..=12).collect();
        for (i, &k) in sizes.iter().enumerate() {
            let share = trials / sizes.len() + usize::from(i < trials % sizes.len());
            let r = check_condition(&cost, share, k, &mut rng);
            merged = Some(match merged {
                None => r,
                Some(mut acc) => {
                    acc.trials += r.trials;
                    acc.violation_count += r.violation_count;
                    let room = crate::costs::MAX_WITNESSES.saturating_sub(acc.witnesses.len());
                    acc.witnesses.extend(r.witnesses.into_iter().take(room));
                    acc
                }
            });
        }
        if let Some(r) = merged {
            properties.push(from_condition("condition_random", r));
        }
    }
    SuiteReport::new(Suite::Lemma3, properties)
}

/// Signature of a ridge update under test: advance `core` past `x` and move
/// `w` to the new ridge solution.
pub type RidgeUpdate =
    fn(&mut DenseMatrix, &mut RidgeCore, &[f64], &[f64]) -> Result<(), RegressorError>;

struct BatchRidge {
    gram: DenseMatrix,
    cross: DenseMatrix,
}

impl BatchRidge {
    fn new(d: usize, k: usize, lambda: f64) -> Self {
        let mut gram = DenseMatrix::identity(d);
        gram.scale(lambda);
        BatchRidge {
            gram,
            cross: DenseMatrix::zeros(d, k),
        }
    }

    fn add(&mut self, x: &[f64], y: &[f64]) {
        self.gram.rank_one_update(1.0, x, x);
        self.cross.rank_one_update(1.0, x, y);
    }

    fn solve(&self) -> DenseMatrix {
        spd_inverse(&self.gram)
            .expect("ridge Gram matrix is positive definite")
            .matmul(&self.cross)
    }
}

/// Recursive ridge against batch solves, with `update` as the recursion.
pub fn sherman_with(update: RidgeUpdate, opts: &VerifyOptions) -> SuiteReport {
    let (d, k, steps, lambda) = (12, 8, 300, 1.0);
    let mut rng = substream(opts.seed, Purpose::Verify);
    let mut h = DenseMatrix::zeros(d, k);
    let mut core = RidgeCore::new(d, lambda).expect("positive lambda");
    let mut batch = BatchRidge::new(d, k, lambda);
    let mut xs = Vec::with_capacity(steps);
    let mut ys = Vec::with_capacity(steps);

    let mut solution = Probe::new("ridge_solution_matches_batch", RIDGE_TOLERANCE);
    let mut inverse = Probe::new("inverse_matches_batch", RIDGE_TOLERANCE);
    for t in 1..=steps {
        let x: Vec<f64> = gaussian(d, &mut rng).iter().map(|v| v * 0.5).collect();
        let y: Vec<f64> = random_labels(k, &mut rng)
            .iter()
            .map(|&l| f64::from(l))
            .collect();
        if let Err(e) = update(&mut h, &mut core, &x, &y) {
            solution.fail(json!({"t": t, "error": e.to_string()}));
            break;
        }
        batch.add(&x, &y);
        let expected = batch.solve();
        let err = h.max_abs_diff(&expected);
        solution.observe(
            err,
            || json!({"t": t, "x": x, "y": y, "max_entry_error": err}),
        );
        let inv = spd_inverse(&batch.gram).expect("positive definite");
        let err = core.a_inv().max_abs_diff(&inv);
        inverse.observe(err, || json!({"t": t, "max_entry_error": err}));
        xs.push(x);
        ys.push(y);
    }

    // ridge on the projected targets P y equals H P^T for any fixed P
    let mut projected = Probe::new("projected_prediction_matches_ridge", RIDGE_TOLERANCE);
    for _ in 0..20 {
        let m = rng.random_range(1..=k);
        let p = ProjectionMatrix::new_unchecked(random_orthonormal(m, k, &mut rng));
        let mut fit = BatchRidge::new(d, m, lambda);
        for (x, y) in xs.iter().zip(&ys) {
            fit.add(x, &p.encode(y));
        }
        let w = fit.solve();
        let x = gaussian(d, &mut rng);
        let direct = w.transpose_mul_vec(&x);
        let via_h = p.encode(&h.transpose_mul_vec(&x));
        let err = direct
            .iter()
            .zip(&via_h)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        projected.observe(err, || json!({"m": m, "x": x, "max_entry_error": err}));
    }

    SuiteReport::new(
        Suite::Sherman,
        vec![solution.finish(), inverse.finish(), projected.finish()],
    )
}

/// The projection by scanning `tau` on successively finer grids.
pub fn grid_capped_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let clipped_sum = |tau: f64| -> f64 { v.iter().map(|x| (x - tau).clamp(0.0, 1.0)).sum() };
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut a, mut b) = (lo, hi);
    let points = 2_000;
    let mut best = a;
    for _ in 0..4 {
        let step = (b - a) / points as f64;
        let mut best_gap = f64::INFINITY;
        for i in 0..=points {
            let tau = a + step * i as f64;
            let gap = (clipped_sum(tau) - budget).abs();
            if gap < best_gap {
                best_gap = gap;
                best = tau;
            }
        }
        a = best - step;
        b = best + step;
    }
    v.iter().map(|x| (x - best).clamp(0.0, 1.0)).collect()
}

/// One Capped MSG step on the full `K x K` matrix: add `eta y y^T`, keep the
/// top `M + 1` eigenpairs and project their eigenvalues.
pub fn dense_msg_step(u: &DenseMatrix, y: &[f64], eta: f64, m: usize) -> DenseMatrix {
    let k = u.rows();
    let mut next = u.clone();
    next.rank_one_update(eta, y, y);
    let eig = symmetric_eigen(&next).expect("symmetric input");
    let sigma = project_capped_simplex(&eig.eigenvalues[..=m], m as f64).expect("feasible");
    let mut out = DenseMatrix::zeros(k, k);
    for (j, s) in sigma.iter().enumerate() {
        let v = eig.eigenvectors.column(j);
        out.rank_one_update(*s, &v, &v);
    }
    out
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = crate::linalg::norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Capped simplex projection and Capped MSG feasibility.
pub fn projection(opts: &VerifyOptions) -> SuiteReport {
    let mut rng = substream(opts.seed, Purpose::Verify);

    let mut grid = Probe::new("capped_simplex_matches_grid", GRID_TOLERANCE);
    for _ in 0..50 {
        let n = rng.random_range(2..=10);
        let budget = rng.random_range(1..n) as f64;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        match project_capped_simplex(&v, budget) {
            Ok(fast) => {
                let slow = grid_capped_simplex(&v, budget);
                let dist = fast
                    .iter()
                    .zip(&slow)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                grid.observe(
                    dist,
                    || json!({"v": v, "budget": budget, "fast": fast, "grid": slow}),
                );
            }
            Err(e) => grid.fail(json!({"v": v, "budget": budget, "error": e.to_string()})),
        }
    }

    let (k, m) = (10, 3);
    let mut feasible = Probe::new("msg_feasibility", FEASIBILITY_TOLERANCE);
    let mut state = CappedMsg::new(k, m, opts.seed, LearningRate::Default).expect("valid dims");
    for t in 1..=500 {
        let y = unit(gaussian(k, &mut rng));
        if let Err(e) = state.update(&y) {
            feasible.fail(json!({"t": t, "error": e.to_string()}));
            break;
        }
        let trace: f64 = state.sigma().iter().sum();
        let range = state
            .sigma()
            .iter()
            .map(|s| (-s).max(s - 1.0).max(0.0))
            .fold(0.0, f64::max);
        let ortho = state.q().row_orthonormality_error();
        let err = (trace - m as f64).abs().max(range).max(ortho);
        feasible.observe(
            err,
            || json!({"t": t, "trace": trace, "sigma": state.sigma(), "orthonormality": ortho}),
        );
    }

    let mut dense = Probe::new("msg_matches_dense_oracle", DENSE_ORACLE_TOLERANCE);
    for k in 3..=6 {
        for m in 1..k.min(4) {
            let mut state = CappedMsg::new(k, m, opts.seed ^ k as u64, LearningRate::Default)
                .expect("valid dims");
            let mut u = state.u_matrix();
            for t in 1..=50u64 {
                // occasionally feed a vector already inside span(Q)
                let y = if t % 7 == 0 {
                    unit(state.q().transpose_mul_vec(&gaussian(m + 1, &mut rng)))
                } else {
                    unit(gaussian(k, &mut rng))
                };
                let eta = state.schedule().at(t, m, k);
                u = dense_msg_step(&u, &y, eta, m);
                if let Err(e) = state.update(&y) {
                    dense.fail(json!({"k": k, "m": m, "t": t, "error": e.to_string()}));
                    break;
                }
                let err = state.u_matrix().max_abs_diff(&u);
                dense.observe(
                    err,
                    || json!({"k": k, "m": m, "t": t, "max_entry_error": err}),
                );
            }
        }
    }

    SuiteReport::new(
        Suite::Projection,
        vec![grid.finish(), feasible.finish(), dense.finish()],
    )
}

fn audited_run(
    config: LearnerConfig,
    stream: &crate::stream::Dataset,
    probe: &mut Probe,
) -> Result<(), LearnerError> {
    let name = format!("{}/{}", config.algorithm, config.cost);
    let mut learner = Learner::new(config, stream.num_features, stream.num_labels)?;
    for inst in &stream.instances {
        let record = learner.step(&inst.features, &inst.labels)?;
        match record.audit {
            Some(a) => probe.observe(
                a.cost - a.bound(),
                || json!({"run": name, "t": record.t, "audit": a}),
            ),
            None => probe.fail(json!({"run": name, "t": record.t, "error": "no audit"})),
        }
    }
    Ok(())
}

/// The per-step cost bound on random inputs and along full learner runs.
pub fn bounds(opts: &VerifyOptions) -> SuiteReport {
    let mut rng = substream(opts.seed, Purpose::Verify);
    let costs = opts.costs();
    let trials = opts.trials.unwrap_or(10_000);

    let mut random = Probe::new("cost_bound_random", BOUND_SLACK);
    for i in 0..trials {
        let cost = costs[i % costs.len()];
        let k = rng.random_range(2..=12);
        let m = rng.random_range(1..=k);
        let p = ProjectionMatrix::new_unchecked(random_orthonormal(m, k, &mut rng));
        let scale: f64 = rng.random_range(0.01..2.0);
        let r: Vec<f64> = gaussian(m, &mut rng).iter().map(|v| v * scale).collect();
        let y = random_labels(k, &mut rng);
        let y_hat = decode(&p, &r).expect("matching code length");
        let order = random_order(k, &mut rng);
        let weights = label_weights(&cost, &y, &y_hat, &order).expect("matching lengths");
        let target = weights.apply(&y);
        let c = cost.evaluate(&y, &y_hat);
        let bound = cost_bound(&p, &r, &target);
        random.observe(c - bound, || {
            json!({"cost": cost, "y": y, "y_hat": y_hat, "r": r, "p": p.matrix(),
                   "order": order.as_slice(), "value": c, "bound": bound})
        });
    }

    let stream = planted_subspace(&PlantedConfig {
        num_features: 20,
        num_labels: 10,
        latent_dim: 3,
        num_instances: 2_000,
        label_noise: 0.3,
        seed: opts.seed,
    });
    let mut audit = Probe::new("per_step_audit", BOUND_SLACK);
    let mut runs = vec![LearnerConfig::new(Algorithm::DppPbt, 3, opts.seed)];
    for cost in &costs {
        runs.push(LearnerConfig::new(Algorithm::CsDppPbc, 3, opts.seed).with_cost(*cost));
    }
    for config in runs {
        let name = format!("{}/{}", config.algorithm, config.cost);
        if let Err(e) = audited_run(config, &stream, &mut audit) {
            audit.fail(json!({"run": name, "error": e.to_string()}));
        }
    }

    SuiteReport::new(Suite::Bounds, vec![random.finish(), audit.finish()])
}

/// Expected regret of DPP-PBC on a planted stream: the two accounting routes
/// agree, the average decays, and the bound holds under its assumptions.
pub fn regret(opts: &VerifyOptions) -> SuiteReport {
    let (d, k, m, long, short) = (20, 10, 3, 2_000usize, 200usize);
    let stream = planted_subspace(&PlantedConfig {
        num_features: d,
        num_labels: k,
        latent_dim: m,
        num_instances: long,
        label_noise: 0.3,
        seed: opts.seed.wrapping_add(300),
    });
    let mut learner = match Learner::new(LearnerConfig::new(Algorithm::DppPbc, m, opts.seed), d, k)
    {
        Ok(l) => l.with_regret_log(1),
        Err(e) => return regret_error(e.to_string()),
    };
    for inst in &stream.instances {
        if let Err(e) = learner.step(&inst.features, &inst.labels) {
            return regret_error(e.to_string());
        }
    }
    let log = learner.take_regret_log();

    let mut routes = Probe::new("sampler_enumeration_matches_split", 1e-8);
    let mut assumptions = Probe::new("assumptions_hold", 0.0);
    let mut bound = Probe::new("regret_within_bound", 0.0);
    let mut averages = Vec::new();
    for t in [short, long] {
        let prefix = &log[..t];
        let outcome =
            reference_from_log(prefix, m).and_then(|r| Ok((expected_regret(prefix, &r)?, r)));
        let (report, reference) = match outcome {
            Ok(v) => v,
            Err(e) => return regret_error(e.to_string()),
        };
        let scale = report.cumulative.abs().max(1.0);
        routes.observe(report.route_gap() / scale, || {
            json!({"t": t, "split": report.cumulative, "enumerated": report.cumulative_enumerated})
        });
        let ok = report.assumptions.passed();
        assumptions.observe(
            if ok { 0.0 } else { 1.0 },
            || json!({"t": t, "assumptions": report.assumptions}),
        );
        let limit = regret_bound(
            report.delta_sum(),
            report.epsilon_hat,
            &reference.h_star,
            m,
            d,
            t,
        );
        if ok {
            bound.observe(
                (report.cumulative - limit).max(0.0),
                || json!({"t": t, "regret": report.cumulative, "bound": limit}),
            );
        }
        averages.push(report.average());
    }
    let mut decay = Probe::new("average_regret_halves", 0.0);
    let excess = averages[1] - 0.5 * averages[0];
    decay.observe(excess.max(0.0), || {
        json!({"average_short": averages[0], "average_long": averages[1], "t_short": short, "t_long": long})
    });

    SuiteReport::new(
        Suite::Regret,
        vec![
            routes.finish(),
            assumptions.finish(),
            bound.finish(),
            decay.finish(),
        ],
    )
}

fn regret_error(message: String) -> SuiteReport {
    let mut p = Probe::new("regret_run", 0.0);
    p.fail(json!({"error": message}));
    SuiteReport::new(Suite::Regret, vec![p.finish()])
}
