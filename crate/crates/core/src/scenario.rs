//! Construction and seeded random sampling of PRO-transfer problem
//! instances.
//!
//! An instance fixes the spacecraft count, discrete horizon, collision
//! radius, dynamics parameters, and per-craft initial/goal states. All
//! endpoint states are energy matched, and generation retries phases until
//! the endpoints themselves are collision free with a small clearance
//! cushion beyond `r_col`.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    energy_matching_residual, pro_state, CwParams, DynamicsError, Pro, State6,
};

/// Residual bound for accepting an endpoint state as energy matched.
pub const ENERGY_MATCH_TOL: f64 = 1e-9;

/// Extra endpoint clearance beyond `r_col` used during generation, so that
/// generated instances stay strictly feasible for an optimizer that
/// enforces a small collision margin.
pub const ENDPOINT_CLEARANCE: f64 = 1.5;

const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("template spacecraft counts sum to {got}, expected {expected}")]
    CountMismatch { expected: usize, got: usize },
    #[error("could not satisfy endpoint separation after {0} attempts")]
    InfeasibleInstance(usize),
    #[error("instance needs n >= 1, T >= 2, r_col > 0 (n={n}, T={t_steps}, r_col={r_col})")]
    BadDimensions { n: usize, t_steps: usize, r_col: f64 },
    #[error("{side} state {index} is not energy matched (residual {residual:e})")]
    NotEnergyMatched {
        side: &'static str,
        index: usize,
        residual: f64,
    },
    #[error("{side} states {i} and {j} are {dist:.3} m apart, within r_col")]
    EndpointsTooClose {
        side: &'static str,
        i: usize,
        j: usize,
        dist: f64,
    },
    #[error("init/goal state counts differ from n")]
    StateCountMismatch,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// A complete transfer planning problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct ProblemInstance {
    pub n: usize,
    pub t_steps: usize,
    pub params: CwParams,
    pub r_col: f64,
    pub init_states: Vec<State6>,
    pub goal_states: Vec<State6>,
}

impl ProblemInstance {
    /// Validate and build an instance. Endpoint states must be energy
    /// matched and pairwise separated by more than `r_col` on each side.
    pub fn new(
        t_steps: usize,
        params: CwParams,
        r_col: f64,
        init_states: Vec<State6>,
        goal_states: Vec<State6>,
    ) -> Result<Self, ScenarioError> {
        let n = init_states.len();
        if goal_states.len() != n {
            return Err(ScenarioError::StateCountMismatch);
        }
        if n < 1 || t_steps < 2 || !(r_col > 0.0) {
            return Err(ScenarioError::BadDimensions { n, t_steps, r_col });
        }
        for (side, states) in [("init", &init_states), ("goal", &goal_states)] {
            for (k, s) in states.iter().enumerate() {
                let res = energy_matching_residual(s, params.e_mean);
                if res.abs() > ENERGY_MATCH_TOL {
                    return Err(ScenarioError::NotEnergyMatched {
                        side,
                        index: k,
                        residual: res,
                    });
                }
            }
            if let Some((i, j, dist)) = closest_pair(states) {
                if dist <= r_col {
                    return Err(ScenarioError::EndpointsTooClose { side, i, j, dist });
                }
            }
        }
        Ok(Self {
            n,
            t_steps,
            params,
            r_col,
            init_states,
            goal_states,
        })
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    /// Total physical transfer duration (T-1 steps).
    pub fn duration(&self) -> f64 {
        (self.t_steps - 1) as f64 * self.params.dt
    }

    /// Relabel spacecraft by `perm` (craft k of the result is craft
    /// `perm[k]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        out.init_states = perm.iter().map(|&k| self.init_states[k]).collect();
        out.goal_states = perm.iter().map(|&k| self.goal_states[k]).collect();
        out
    }
}

fn closest_pair(states: &[State6]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d = states[i].position_distance(&states[j]);
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

/// Flat on-disk instance format.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    #[serde(rename = "T")]
    t_steps: usize,
    dt: f64,
    mu: f64,
    r0: f64,
    r_col: f64,
    init_states: Vec<[f64; 6]>,
    goal_states: Vec<[f64; 6]>,
}

impl From<ProblemInstance> for InstanceFile {
    fn from(p: ProblemInstance) -> Self {
        InstanceFile {
            n: p.n,
            t_steps: p.t_steps,
            dt: p.params.dt,
            mu: p.params.mu,
            r0: p.params.r0,
            r_col: p.r_col,
            init_states: p.init_states.iter().map(|s| s.as_array()).collect(),
            goal_states: p.goal_states.iter().map(|s| s.as_array()).collect(),
        }
    }
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = ScenarioError;

    fn try_from(f: InstanceFile) -> Result<Self, Self::Error> {
        let params = CwParams::new(f.mu, f.r0, f.dt)?;
        let inst = ProblemInstance::new(
            f.t_steps,
            params,
            f.r_col,
            f.init_states.into_iter().map(State6::from_array).collect(),
            f.goal_states.into_iter().map(State6::from_array).collect(),
        )?;
        if inst.n != f.n {
            return Err(ScenarioError::StateCountMismatch);
        }
        Ok(inst)
    }
}

/// How craft phases are placed on each orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhasePolicy {
    /// Evenly spaced around the orbit, starting from the orbit's own phase.
    EqualSpacing,
    /// Uniformly random phases drawn from a generator seeded here, so that
    /// instantiation stays a pure function of the template.
    Random { seed: u64 },
}

/// A transfer description: craft distributed over initial orbits move to
/// craft slots on goal orbits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTemplate {
    /// (orbit, number of craft on it) for the initial configuration.
    pub init_orbits: Vec<(Pro, usize)>,
    /// (orbit, number of craft on it) for the goal configuration.
    pub goal_orbits: Vec<(Pro, usize)>,
    pub phase_policy: PhasePolicy,
}

impl TransferTemplate {
    /// n craft equally spaced on a 200 m orbit transferring to two coplanar
    /// orbits of 100 m and 300 m, split as evenly as possible.
    pub fn concentric_split(n: usize) -> Self {
        let half = n / 2;
        TransferTemplate {
            init_orbits: vec![(Pro::new(200.0, 0.0, 0.0, 0.0).unwrap(), n)],
            goal_orbits: vec![
                (Pro::new(100.0, 0.0, 0.0, 0.0).unwrap(), half),
                (Pro::new(300.0, 0.0, 0.0, 0.0).unwrap(), n - half),
            ],
            phase_policy: PhasePolicy::EqualSpacing,
        }
    }

    /// n craft equally spaced on a flat 200 m orbit transferring to two
    /// 200 m orbits slanted +45 and -45 degrees.
    pub fn slanted_split(n: usize) -> Self {
        let half = n / 2;
        let tilt = std::f64::consts::FRAC_PI_4;
        TransferTemplate {
            init_orbits: vec![(Pro::new(200.0, 0.0, 0.0, 0.0).unwrap(), n)],
            goal_orbits: vec![
                (Pro::new(200.0, 0.0, tilt, 0.0).unwrap(), half),
                (Pro::new(200.0, 0.0, -tilt, 0.0).unwrap(), n - half),
            ],
            phase_policy: PhasePolicy::EqualSpacing,
        }
    }

    fn total(orbits: &[(Pro, usize)]) -> usize {
        orbits.iter().map(|(_, c)| c).sum()
    }
}

/// Materialize a template into a problem instance.
///
/// Init states are sampled from the initial orbits at t = 0 and goal
/// states from the goal orbits at t = T·dt. Craft are assigned to goal
/// slots in sorted phase order within each orbit. Phases are re-drawn (or
/// deterministically rotated, for equal spacing) until the endpoint
/// separation invariants hold.
pub fn instantiate(
    template: &TransferTemplate,
    n: usize,
    t_steps: usize,
    r_col: f64,
    params: &CwParams,
) -> Result<ProblemInstance, ScenarioError> {
    if TransferTemplate::total(&template.init_orbits) != n {
        return Err(ScenarioError::CountMismatch {
            expected: n,
            got: TransferTemplate::total(&template.init_orbits),
        });
    }
    if TransferTemplate::total(&template.goal_orbits) != n {
        return Err(ScenarioError::CountMismatch {
            expected: n,
            got: TransferTemplate::total(&template.goal_orbits),
        });
    }
    let mut rng = match template.phase_policy {
        PhasePolicy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        PhasePolicy::EqualSpacing => None,
    };
    let t_goal = t_steps as f64 * params.dt;
    let clearance = r_col + ENDPOINT_CLEARANCE;
    // golden-angle rotation so repeated equal-spacing attempts explore
    // distinct relative phasings
    let golden = std::f64::consts::TAU * 0.381_966_011_250_105;
    for attempt in 0..MAX_ATTEMPTS {
        let shift = attempt as f64 * golden;
        let init = place_on_orbits(&template.init_orbits, params, 0.0, shift, rng.as_mut())?;
        let goal = place_on_orbits(&template.goal_orbits, params, t_goal, shift, rng.as_mut())?;
        if min_separation(&init) > clearance && min_separation(&goal) > clearance {
            return ProblemInstance::new(t_steps, *params, r_col, init, goal);
        }
    }
    Err(ScenarioError::InfeasibleInstance(MAX_ATTEMPTS))
}

/// Sample craft states on a list of orbits, sorted by phase within each
/// orbit so that slot order is deterministic.
fn place_on_orbits(
    orbits: &[(Pro, usize)],
    params: &CwParams,
    t: f64,
    equal_spacing_shift: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<State6>, ScenarioError> {
    let mut states = Vec::new();
    for (orbit_idx, (pro, count)) in orbits.iter().enumerate() {
        let mut phases: Vec<f64> = match rng.as_deref_mut() {
            Some(r) => (0..*count)
                .map(|_| r.gen_range(0.0..std::f64::consts::TAU))
                .collect(),
            None => {
                let step = std::f64::consts::TAU / (*count).max(1) as f64;
                // stagger successive orbits so equal-spacing goal orbits
                // do not start phase-aligned with each other
                let base = equal_spacing_shift + orbit_idx as f64 * step * 0.5;
                (0..*count).map(|k| base + k as f64 * step).collect()
            }
        };
        phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for ph in phases {
            let p = Pro::new(pro.a_semi, pro.phase + ph, pro.slant, pro.y_offset)?;
            states.push(pro_state(&p, params, t)?);
        }
    }
    Ok(states)
}

fn min_separation(states: &[State6]) -> f64 {
    closest_pair(states).map_or(f64::INFINITY, |(_, _, d)| d)
}

/// Draw a random transfer instance, deterministic in `seed`.
///
/// Orbit geometry is sampled uniformly over the ranges spanned by the
/// reference transfer examples: along-track amplitudes in [100, 300] m,
/// slants in [-45, 45] deg, with craft split across one to three orbits
/// per side. Per-orbit phases are jittered equal spacing, which keeps
/// same-orbit craft separated while remaining random; attempts are
/// repeated until the endpoint clearance holds.
pub fn sample_random(
    seed: u64,
    n: usize,
    t_steps: usize,
    r_col: f64,
    params: &CwParams,
) -> Result<ProblemInstance, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_goal = t_steps as f64 * params.dt;
    let clearance = r_col + ENDPOINT_CLEARANCE;
    for _ in 0..MAX_ATTEMPTS {
        let init_orbits = random_orbit_set(&mut rng, n);
        let goal_orbits = random_orbit_set(&mut rng, n);
        let init = random_placement(&mut rng, &init_orbits, params, 0.0)?;
        let goal = random_placement(&mut rng, &goal_orbits, params, t_goal)?;
        if min_separation(&init) > clearance && min_separation(&goal) > clearance {
            return ProblemInstance::new(t_steps, *params, r_col, init, goal);
        }
    }
    Err(ScenarioError::InfeasibleInstance(MAX_ATTEMPTS))
}

/// Split `n` craft over 1-3 random orbits, keeping orbit geometries
/// mutually separated so endpoint clearance is attainable.
fn random_orbit_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Pro, usize)> {
    let k = rng.gen_range(1..=3usize.min(n));
    // random composition of n into k positive parts
    let mut counts = vec![1usize; k];
    for _ in 0..n - k {
        let idx = rng.gen_range(0..k);
        counts[idx] += 1;
    }
    let slant_max = std::f64::consts::FRAC_PI_4;
    let mut orbits: Vec<Pro> = Vec::with_capacity(k);
    for _ in 0..k {
        // keep geometries distinguishable from the ones already drawn
        let mut candidate = None;
        for _ in 0..20 {
            let a = rng.gen_range(100.0..300.0);
            let slant = rng.gen_range(-slant_max..slant_max);
            let distinct = orbits
                .iter()
                .all(|o| (o.a_semi - a).abs() > 25.0 || (o.slant - slant).abs() > 0.2);
            if distinct {
                candidate = Some((a, slant));
                break;
            }
        }
        let (a, slant) = candidate.unwrap_or((
            rng.gen_range(100.0..300.0),
            rng.gen_range(-slant_max..slant_max),
        ));
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        orbits.push(Pro::new(a, phase, slant, 0.0).expect("sampled orbit parameters are valid"));
    }
    orbits.into_iter().zip(counts).collect()
}

fn random_placement(
    rng: &mut ChaCha8Rng,
    orbits: &[(Pro, usize)],
    params: &CwParams,
    t: f64,
) -> Result<Vec<State6>, ScenarioError> {
    let mut states = Vec::new();
    for (pro, count) in orbits {
        let step = std::f64::consts::TAU / (*count).max(1) as f64;
        let mut phases: Vec<f64> = (0..*count)
            .map(|k| k as f64 * step + rng.gen_range(-0.25..0.25) * step)
            .collect();
        phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for ph in phases {
            let p = Pro::new(pro.a_semi, pro.phase + ph, pro.slant, pro.y_offset)?;
            states.push(pro_state(&p, params, t)?);
        }
    }
    Ok(states)
}

/// Single-craft instance whose goal is the free-drift image of its initial
/// state after the full transfer duration; its minimum fuel cost is zero.
pub fn same_orbit_drift_instance(
    pro: &Pro,
    t_steps: usize,
    r_col: f64,
    params: &CwParams,
) -> Result<ProblemInstance, ScenarioError> {
    let init = pro_state(pro, params, 0.0)?;
    let goal = pro_state(pro, params, (t_steps - 1) as f64 * params.dt)?;
    ProblemInstance::new(t_steps, *params, r_col, vec![init], vec![goal])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leo_t11() -> CwParams {
        CwParams::leo_for_steps(11)
    }

    #[test]
    fn concentric_template_matches_described_geometry() {
        let params = leo_t11();
        let inst = instantiate(
            &TransferTemplate::concentric_split(10),
            10,
            11,
            15.0,
            &params,
        )
        .expect("template instantiates");
        assert_eq!(inst.n, 10);
        assert_eq!(inst.init_states.len(), 10);
        // all goal states lie on coplanar orbits: z = 0 throughout
        for s in &inst.goal_states {
            assert!(s.p[2].abs() < 1e-9);
            assert!(s.v[2].abs() < 1e-12);
        }
        // energy matched by construction
        for s in inst.init_states.iter().chain(&inst.goal_states) {
            assert!(energy_matching_residual(s, params.e_mean).abs() < 1e-9);
        }
    }

    #[test]
    fn slanted_template_has_out_of_plane_goals() {
        let params = leo_t11();
        let inst = instantiate(
            &TransferTemplate::slanted_split(10),
            10,
            11,
            15.0,
            &params,
        )
        .expect("template instantiates");
        let max_z = inst
            .goal_states
            .iter()
            .map(|s| s.p[2].abs())
            .fold(0.0, f64::max);
        assert!(max_z > 10.0, "slanted goals should leave the plane");
        for s in &inst.init_states {
            assert!(s.p[2].abs() < 1e-9);
        }
    }

    #[test]
    fn single_craft_instance_trivially_feasible() {
        let params = leo_t11();
        let template = TransferTemplate {
            init_orbits: vec![(Pro::new(150.0, 0.0, 0.0, 0.0).unwrap(), 1)],
            goal_orbits: vec![(Pro::new(250.0, 1.0, 0.3, 0.0).unwrap(), 1)],
            phase_policy: PhasePolicy::EqualSpacing,
        };
        let inst = instantiate(&template, 1, 11, 15.0, &params).unwrap();
        assert_eq!(inst.n, 1);
    }

    #[test]
    fn count_mismatch_rejected() {
        let params = leo_t11();
        let template = TransferTemplate::concentric_split(10);
        assert!(matches!(
            instantiate(&template, 9, 11, 15.0, &params),
            Err(ScenarioError::CountMismatch { .. })
        ));
    }

    #[test]
    fn crowded_orbit_is_infeasible() {
        let params = leo_t11();
        // 40 craft on a 40 m orbit cannot keep 15 m apart
        let template = TransferTemplate {
            init_orbits: vec![(Pro::new(40.0, 0.0, 0.0, 0.0).unwrap(), 40)],
            goal_orbits: vec![(Pro::new(45.0, 0.0, 0.0, 0.0).unwrap(), 40)],
            phase_policy: PhasePolicy::EqualSpacing,
        };
        assert!(matches!(
            instantiate(&template, 40, 11, 15.0, &params),
            Err(ScenarioError::InfeasibleInstance(_))
        ));
    }

    #[test]
    fn sample_random_is_deterministic() {
        let params = leo_t11();
        let a = sample_random(42, 10, 11, 15.0, &params).unwrap();
        let b = sample_random(42, 10, 11, 15.0, &params).unwrap();
        assert_eq!(a, b);
        let c = sample_random(43, 10, 11, 15.0, &params).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_random_invariant_sweep() {
        let params = leo_t11();
        for seed in 0..300 {
            let inst = sample_random(seed, 10, 11, 15.0, &params).expect("sample feasible");
            assert_eq!(inst.n, 10);
            for s in inst.init_states.iter().chain(&inst.goal_states) {
                assert!(energy_matching_residual(s, params.e_mean).abs() < 1e-9);
            }
            assert!(min_separation(&inst.init_states) > 15.0);
            assert!(min_separation(&inst.goal_states) > 15.0);
        }
    }

    #[test]
    fn sample_random_pairwise_seeds_n2() {
        let params = leo_t11();
        for seed in 0..100 {
            let inst = sample_random(seed, 2, 11, 15.0, &params).unwrap();
            assert!(inst.init_states[0].position_distance(&inst.init_states[1]) > 15.0);
            assert!(inst.goal_states[0].position_distance(&inst.goal_states[1]) > 15.0);
        }
    }

    #[test]
    fn sample_random_large_n_feasible() {
        let params = leo_t11();
        for seed in 0..10 {
            let inst = sample_random(seed, 30, 11, 15.0, &params).expect("n=30 should sample");
            assert!(min_separation(&inst.init_states) > 15.0);
        }
    }

    #[test]
    fn validation_rejects_unmatched_energy() {
        let params = leo_t11();
        let bad = State6::new([100.0, 0.0, 0.0], [0.0, 0.0, 0.0]); // residual 2e*100
        let good = pro_state(&Pro::new(200.0, 0.0, 0.0, 0.0).unwrap(), &params, 0.0).unwrap();
        let err = ProblemInstance::new(11, params, 15.0, vec![bad], vec![good]);
        assert!(matches!(err, Err(ScenarioError::NotEnergyMatched { .. })));
    }

    #[test]
    fn validation_rejects_close_endpoints() {
        let params = leo_t11();
        let orbit = Pro::new(200.0, 0.0, 0.0, 0.0).unwrap();
        let a = pro_state(&orbit, &params, 0.0).unwrap();
        let near = Pro::new(200.0, 0.02, 0.0, 0.0).unwrap();
        let b = pro_state(&near, &params, 0.0).unwrap();
        let goal_a = pro_state(&orbit, &params, 1000.0).unwrap();
        let goal_b = pro_state(&near, &params, 3000.0).unwrap();
        let err = ProblemInstance::new(11, params, 15.0, vec![a, b], vec![goal_a, goal_b]);
        assert!(matches!(err, Err(ScenarioError::EndpointsTooClose { .. })));
    }

    #[test]
    fn instance_json_round_trip() {
        let params = leo_t11();
        let inst = sample_random(7, 4, 11, 15.0, &params).unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        assert!(text.contains("\"T\":11"));
        assert!(text.contains("\"mu\":"));
        let back: ProblemInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn drift_instance_endpoints_connected_by_free_drift() {
        let params = leo_t11();
        let pro = Pro::new(180.0, 0.4, 0.2, 10.0).unwrap();
        let inst = same_orbit_drift_instance(&pro, 11, 15.0, &params).unwrap();
        let dd = crate::dynamics::discretize(&params);
        let traj = crate::dynamics::propagate(
            &inst.init_states[0],
            &vec![crate::dynamics::Control3::ZERO; 10],
            &dd,
            11,
        )
        .unwrap();
        let end = traj.last().unwrap();
        for k in 0..3 {
            assert!((end.p[k] - inst.goal_states[0].p[k]).abs() < 1e-6);
            assert!((end.v[k] - inst.goal_states[0].v[k]).abs() < 1e-9);
        }
    }
}
