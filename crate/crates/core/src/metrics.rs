//! Evaluation functionals: fuel cost, collision counting, and report
//! aggregation over batches of trials.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Control3, Trajectory};

/// Total fuel: sum of L1 norms of every control input over all craft
/// and steps.
pub fn fuel_cost(controls: &[Vec<Control3>]) -> f64 {
    controls
        .iter()
        .flat_map(|per_craft| per_craft.iter())
        .map(Control3::l1_norm)
        .sum()
}

/// Number of colliding (pair, step) combinations: pairs whose positions
/// come within `r_col` (inclusive) at a discrete step each count once per
/// step.
pub fn collision_count(trajectories: &[Trajectory], r_col: f64) -> usize {
    let n = trajectories.len();
    if n < 2 {
        return 0;
    }
    let t_steps = trajectories[0].len();
    let r2 = r_col * r_col;
    let mut count = 0;
    for t in 0..t_steps {
        for i in 0..n - 1 {
            let pi = &trajectories[i][t].p;
            for traj_j in &trajectories[i + 1..] {
                let pj = &traj_j[t].p;
                let dx = pi[0] - pj[0];
                let dy = pi[1] - pj[1];
                let dz = pi[2] - pj[2];
                // boundary distance == r_col counts as a collision
                if dx * dx + dy * dy + dz * dz <= r2 {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Smallest pairwise position distance over all steps; infinity for n < 2.
pub fn min_pairwise_distance(trajectories: &[Trajectory]) -> f64 {
    let n = trajectories.len();
    let mut best = f64::INFINITY;
    if n < 2 {
        return best;
    }
    let t_steps = trajectories[0].len();
    for t in 0..t_steps {
        for i in 0..n - 1 {
            for j in i + 1..n {
                let d = trajectories[i][t].position_distance(&trajectories[j][t]);
                best = best.min(d);
            }
        }
    }
    best
}

/// Collision radius from craft radius and buffer distance: 2r + r_b.
pub fn collision_radius(r: f64, r_b: f64) -> f64 {
    debug_assert!(r >= 0.0 && r_b >= 0.0);
    2.0 * r + r_b
}

/// One evaluated trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub fuel: f64,
    pub collisions: usize,
    pub runtime_s: f64,
}

/// Aggregate over a batch of trials. Averages are recomputable from the
/// per-trial rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fuel_avg: f64,
    pub fuel_max: f64,
    pub collisions_avg: f64,
    pub collisions_max: usize,
    pub runtime_avg: f64,
    pub per_trial: Vec<TrialRecord>,
}

impl EvalReport {
    pub fn from_trials(per_trial: Vec<TrialRecord>) -> Self {
        let n = per_trial.len().max(1) as f64;
        let fuel_avg = per_trial.iter().map(|t| t.fuel).sum::<f64>() / n;
        let fuel_max = per_trial.iter().map(|t| t.fuel).fold(0.0, f64::max);
        let collisions_avg = per_trial.iter().map(|t| t.collisions as f64).sum::<f64>() / n;
        let collisions_max = per_trial.iter().map(|t| t.collisions).max().unwrap_or(0);
        let runtime_avg = per_trial.iter().map(|t| t.runtime_s).sum::<f64>() / n;
        Self {
            fuel_avg,
            fuel_max,
            collisions_avg,
            collisions_max,
            runtime_avg,
            per_trial,
        }
    }

    /// One CSV row per trial: `trial,fuel,collisions,runtime_s`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "trial,fuel,collisions,runtime_s")?;
        for (k, t) in self.per_trial.iter().enumerate() {
            writeln!(w, "{},{},{},{}", k, t.fuel, t.collisions, t.runtime_s)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn save_json_summary(&self, path: &Path) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Summary {
            fuel_avg: f64,
            fuel_max: f64,
            collisions_avg: f64,
            collisions_max: usize,
            runtime_avg: f64,
            trials: usize,
        }
        let s = Summary {
            fuel_avg: self.fuel_avg,
            fuel_max: self.fuel_max,
            collisions_avg: self.collisions_avg,
            collisions_max: self.collisions_max,
            runtime_avg: self.runtime_avg,
            trials: self.per_trial.len(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&s)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::State6;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn stationary(p: [f64; 3], t_steps: usize) -> Trajectory {
        vec![State6::new(p, [0.0; 3]); t_steps]
    }

    #[test]
    fn fuel_cost_examples() {
        assert_eq!(fuel_cost(&[vec![Control3::ZERO; 10]]), 0.0);
        assert_eq!(fuel_cost(&[vec![Control3([1.0, -2.0, 3.0])]]), 6.0);
        let two = vec![vec![Control3([0.5, 0.0, 0.0]); 10]; 2];
        assert!((fuel_cost(&two) - 10.0).abs() < 1e-15);
    }

    #[test]
    fn fuel_cost_is_absolutely_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let controls: Vec<Vec<Control3>> = (0..3)
            .map(|_| {
                (0..10)
                    .map(|_| {
                        Control3([
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        ])
                    })
                    .collect()
            })
            .collect();
        let base = fuel_cost(&controls);
        for lambda in [-3.5f64, 0.0, 2.25] {
            let scaled: Vec<Vec<Control3>> = controls
                .iter()
                .map(|cs| {
                    cs.iter()
                        .map(|c| Control3([c.0[0] * lambda, c.0[1] * lambda, c.0[2] * lambda]))
                        .collect()
                })
                .collect();
            assert!((fuel_cost(&scaled) - lambda.abs() * base).abs() < 1e-12 * (1.0 + base));
        }
    }

    #[test]
    fn collision_count_single_craft_is_zero() {
        let traj = stationary([0.0; 3], 11);
        assert_eq!(collision_count(&[traj], 15.0), 0);
    }

    #[test]
    fn collision_count_stationary_pair() {
        let a = stationary([0.0; 3], 11);
        let b = stationary([10.0, 0.0, 0.0], 11);
        assert_eq!(collision_count(&[a, b], 15.0), 11);
    }

    #[test]
    fn collision_count_boundary_tie_counts() {
        let a = stationary([0.0; 3], 3);
        let b = stationary([15.0, 0.0, 0.0], 3);
        assert_eq!(collision_count(&[a, b], 15.0), 3);
    }

    // Naive re-count used as the independent oracle.
    fn naive_count(trajectories: &[Trajectory], r_col: f64) -> usize {
        let mut c = 0;
        for t in 0..trajectories.first().map_or(0, |tr| tr.len()) {
            for i in 0..trajectories.len() {
                for j in 0..trajectories.len() {
                    if i < j {
                        let d = trajectories[i][t].position_distance(&trajectories[j][t]);
                        if d <= r_col {
                            c += 1;
                        }
                    }
                }
            }
        }
        c
    }

    fn random_trajectories(rng: &mut ChaCha8Rng, n: usize, t_steps: usize) -> Vec<Trajectory> {
        (0..n)
            .map(|_| {
                (0..t_steps)
                    .map(|_| {
                        State6::new(
                            [
                                rng.gen_range(-30.0..30.0),
                                rng.gen_range(-30.0..30.0),
                                rng.gen_range(-30.0..30.0),
                            ],
                            [0.0; 3],
                        )
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn collision_count_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let trajs = random_trajectories(&mut rng, 5, 7);
            assert_eq!(collision_count(&trajs, 15.0), naive_count(&trajs, 15.0));
        }
    }

    #[test]
    fn collision_count_monotone_in_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trajs = random_trajectories(&mut rng, 6, 9);
        let mut prev = 0;
        for r in [1.0, 5.0, 15.0, 40.0, 200.0] {
            let c = collision_count(&trajs, r);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn collision_count_rigid_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trajs = random_trajectories(&mut rng, 5, 6);
        let shifted: Vec<Trajectory> = trajs
            .iter()
            .map(|tr| {
                tr.iter()
                    .map(|s| State6::new([s.p[0] + 100.0, s.p[1] - 55.0, s.p[2] + 7.0], s.v))
                    .collect()
            })
            .collect();
        assert_eq!(
            collision_count(&trajs, 12.0),
            collision_count(&shifted, 12.0)
        );
    }

    #[test]
    fn collision_count_relabeling_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut trajs = random_trajectories(&mut rng, 5, 6);
        let before = collision_count(&trajs, 20.0);
        trajs.reverse();
        trajs.swap(1, 3);
        assert_eq!(collision_count(&trajs, 20.0), before);
    }

    #[test]
    fn collision_radius_examples() {
        assert_eq!(collision_radius(5.0, 5.0), 15.0);
        assert_eq!(collision_radius(0.0, 0.0), 0.0);
        assert_eq!(collision_radius(1.0, 3.0), 5.0);
    }

    #[test]
    fn report_averages_recomputable() {
        let trials = vec![
            TrialRecord {
                fuel: 1.0,
                collisions: 2,
                runtime_s: 0.5,
            },
            TrialRecord {
                fuel: 3.0,
                collisions: 0,
                runtime_s: 1.5,
            },
        ];
        let r = EvalReport::from_trials(trials.clone());
        assert!((r.fuel_avg - 2.0).abs() < 1e-15);
        assert_eq!(r.collisions_max, 2);
        assert!((r.runtime_avg - 1.0).abs() < 1e-15);
        let recomputed = EvalReport::from_trials(r.per_trial.clone());
        assert_eq!(recomputed, r);
    }
}
