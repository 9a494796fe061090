//! Clohessy–Wiltshire relative dynamics in the LVLH frame.
//!
//! Provides the continuous-time CW model, the exact closed-form discrete
//! state-transition matrices with zero-order-hold input, and energy-matched
//! passive relative orbit (PRO) generation. All downstream planning and
//! learning code goes through these types, so everything here is exact to
//! machine precision rather than numerically integrated.
//!
//! Axes: x radial (away from Earth), y along-track, z angular momentum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Earth's gravitational parameter (m³/s²).
pub const MU_EARTH: f64 = 3.986004418e14;

/// Default reference orbit radius: 400 km LEO (m).
pub const R0_LEO: f64 = 6.778137e6;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("gravitational parameter and orbit radius must be positive (mu={mu}, r0={r0})")]
    NonPositiveOrbit { mu: f64, r0: f64 },
    #[error("time step must be nonnegative, got {0}")]
    NegativeStep(f64),
    #[error("slant angle must lie strictly inside (-pi/2, pi/2), got {0}")]
    SlantOutOfRange(f64),
    #[error("semi-major axis must be nonnegative, got {0}")]
    NegativeSemiMajorAxis(f64),
    #[error("expected {expected} controls for a {t_steps}-step trajectory, got {got}")]
    ControlLengthMismatch {
        expected: usize,
        got: usize,
        t_steps: usize,
    },
}

/// Mean motion sqrt(mu/r0³) of the reference circular orbit (rad/s).
pub fn mean_motion(mu: f64, r0: f64) -> Result<f64, DynamicsError> {
    if mu <= 0.0 || r0 <= 0.0 {
        return Err(DynamicsError::NonPositiveOrbit { mu, r0 });
    }
    Ok((mu / (r0 * r0 * r0)).sqrt())
}

/// Parameters of the linearized relative-motion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwParams {
    /// Gravitational parameter (m³/s²).
    pub mu: f64,
    /// Reference orbit radius (m).
    pub r0: f64,
    /// Mean motion of the reference orbit (rad/s), always sqrt(mu/r0³).
    pub e_mean: f64,
    /// Discretization step (s).
    pub dt: f64,
}

impl CwParams {
    /// Build parameters, deriving the mean motion. `dt = 0` is permitted
    /// (it yields identity discrete dynamics); negative `dt` is rejected.
    pub fn new(mu: f64, r0: f64, dt: f64) -> Result<Self, DynamicsError> {
        let e_mean = mean_motion(mu, r0)?;
        if dt < 0.0 {
            return Err(DynamicsError::NegativeStep(dt));
        }
        Ok(Self { mu, r0, e_mean, dt })
    }

    /// Default 400 km LEO reference orbit with the given step.
    pub fn leo(dt: f64) -> Self {
        Self::new(MU_EARTH, R0_LEO, dt).expect("LEO constants are valid")
    }

    /// LEO parameters with the step chosen so that a `t_steps`-point
    /// trajectory spans half an orbital period (the default transfer time).
    pub fn leo_for_steps(t_steps: usize) -> Self {
        assert!(t_steps >= 2, "a trajectory needs at least two steps");
        let e = mean_motion(MU_EARTH, R0_LEO).expect("LEO constants are valid");
        let duration = std::f64::consts::PI / e;
        Self::leo(duration / (t_steps - 1) as f64)
    }

    /// Orbital period of the reference orbit (s).
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.e_mean
    }
}

/// Position + velocity state in the LVLH frame (m, m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 6]", from = "[f64; 6]")]
pub struct State6 {
    pub p: [f64; 3],
    pub v: [f64; 3],
}

impl State6 {
    pub const ZERO: State6 = State6 {
        p: [0.0; 3],
        v: [0.0; 3],
    };

    pub fn new(p: [f64; 3], v: [f64; 3]) -> Self {
        Self { p, v }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.p[0], self.p[1], self.p[2], self.v[0], self.v[1], self.v[2],
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            p: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }

    pub fn add(&self, other: &State6) -> State6 {
        let mut out = [0.0; 6];
        let (a, b) = (self.as_array(), other.as_array());
        for i in 0..6 {
            out[i] = a[i] + b[i];
        }
        State6::from_array(out)
    }

    pub fn sub(&self, other: &State6) -> State6 {
        let mut out = [0.0; 6];
        let (a, b) = (self.as_array(), other.as_array());
        for i in 0..6 {
            out[i] = a[i] - b[i];
        }
        State6::from_array(out)
    }

    pub fn scale(&self, k: f64) -> State6 {
        let mut out = self.as_array();
        for x in &mut out {
            *x *= k;
        }
        State6::from_array(out)
    }

    /// Euclidean distance between the position components (m).
    pub fn position_distance(&self, other: &State6) -> f64 {
        let dx = self.p[0] - other.p[0];
        let dy = self.p[1] - other.p[1];
        let dz = self.p[2] - other.p[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Largest absolute component over position and velocity.
    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl From<State6> for [f64; 6] {
    fn from(s: State6) -> Self {
        s.as_array()
    }
}

impl From<[f64; 6]> for State6 {
    fn from(a: [f64; 6]) -> Self {
        State6::from_array(a)
    }
}

/// Acceleration control input (m/s²), one per trajectory step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control3(pub [f64; 3]);

impl Control3 {
    pub const ZERO: Control3 = Control3([0.0; 3]);

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// A T-step state time series for one spacecraft.
pub type Trajectory = Vec<State6>;

/// Time derivative of the CW state under control `u`.
///
/// Returns d/dt [x y z vx vy vz] = [vx, vy, vz,
///   3e²x + 2e·vy + u1, -2e·vx + u2, -e²z + u3].
pub fn cw_derivative(s: &State6, u: &Control3, params: &CwParams) -> State6 {
    let e = params.e_mean;
    State6 {
        p: s.v,
        v: [
            3.0 * e * e * s.p[0] + 2.0 * e * s.v[1] + u.0[0],
            -2.0 * e * s.v[0] + u.0[1],
            -e * e * s.p[2] + u.0[2],
        ],
    }
}

/// Energy-matching residual ẏ + 2e·x. Zero means the state lies on a
/// bounded (non-drifting) relative orbit.
pub fn energy_matching_residual(s: &State6, e_mean: f64) -> f64 {
    s.v[1] + 2.0 * e_mean * s.p[0]
}

/// Exact discrete-time CW dynamics over one step: s' = A·s + B·u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDynamics {
    /// 6×6 state-transition matrix.
    pub a: [[f64; 6]; 6],
    /// 6×3 zero-order-hold input matrix.
    pub b: [[f64; 3]; 6],
    /// Step length (s).
    pub dt: f64,
}

/// Closed-form CW state-transition matrix and zero-order-hold input matrix
/// over `params.dt`. Exact; no numerical integration involved.
pub fn discretize(params: &CwParams) -> DiscreteDynamics {
    let e = params.e_mean;
    let dt = params.dt;
    let th = e * dt;
    let (s, c) = th.sin_cos();

    let a = [
        [4.0 - 3.0 * c, 0.0, 0.0, s / e, 2.0 * (1.0 - c) / e, 0.0],
        [
            6.0 * (s - th),
            1.0,
            0.0,
            2.0 * (c - 1.0) / e,
            (4.0 * s - 3.0 * th) / e,
            0.0,
        ],
        [0.0, 0.0, c, 0.0, 0.0, s / e],
        [3.0 * e * s, 0.0, 0.0, c, 2.0 * s, 0.0],
        [6.0 * e * (c - 1.0), 0.0, 0.0, -2.0 * s, 4.0 * c - 3.0, 0.0],
        [0.0, 0.0, -e * s, 0.0, 0.0, c],
    ];

    let e2 = e * e;
    let b = [
        [(1.0 - c) / e2, 2.0 * (th - s) / e2, 0.0],
        [
            2.0 * (s - th) / e2,
            (4.0 * (1.0 - c) - 1.5 * th * th) / e2,
            0.0,
        ],
        [0.0, 0.0, (1.0 - c) / e2],
        [s / e, 2.0 * (1.0 - c) / e, 0.0],
        [2.0 * (c - 1.0) / e, (4.0 * s - 3.0 * th) / e, 0.0],
        [0.0, 0.0, s / e],
    ];

    DiscreteDynamics { a, b, dt }
}

impl DiscreteDynamics {
    /// One discrete step: A·s + B·u.
    pub fn step(&self, s: &State6, u: &Control3) -> State6 {
        let sv = s.as_array();
        let mut out = [0.0; 6];
        for (i, row) in self.a.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += row[j] * sv[j];
            }
            for j in 0..3 {
                acc += self.b[i][j] * u.0[j];
            }
            out[i] = acc;
        }
        State6::from_array(out)
    }

    /// Least-squares control recovering s' = A·s + B·u from a state pair.
    ///
    /// B has full column rank for dt > 0, so when the pair actually follows
    /// the dynamics this recovers u exactly; otherwise it is the minimum-norm
    /// residual fit. Used to assign a fuel value to externally produced
    /// trajectories (e.g. network outputs).
    pub fn control_between(&self, s: &State6, s_next: &State6) -> Control3 {
        // residual r = s_next - A s, solve min ||B u - r|| via normal equations
        let sv = s.as_array();
        let nx = s_next.as_array();
        let mut r = [0.0; 6];
        for i in 0..6 {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += self.a[i][j] * sv[j];
            }
            r[i] = nx[i] - acc;
        }
        // G = BᵀB (3×3), h = Bᵀr
        let mut g = [[0.0; 3]; 3];
        let mut h = [0.0; 3];
        for k in 0..6 {
            for i in 0..3 {
                h[i] += self.b[k][i] * r[k];
                for j in 0..3 {
                    g[i][j] += self.b[k][i] * self.b[k][j];
                }
            }
        }
        Control3(solve3(g, h))
    }
}

/// Solve a 3×3 symmetric positive-definite system by Gaussian elimination.
fn solve3(mut g: [[f64; 3]; 3], mut h: [f64; 3]) -> [f64; 3] {
    for k in 0..3 {
        // partial pivot
        let mut p = k;
        for i in k + 1..3 {
            if g[i][k].abs() > g[p][k].abs() {
                p = i;
            }
        }
        g.swap(k, p);
        h.swap(k, p);
        let piv = g[k][k];
        if piv.abs() < 1e-300 {
            continue;
        }
        for i in k + 1..3 {
            let f = g[i][k] / piv;
            for j in k..3 {
                g[i][j] -= f * g[k][j];
            }
            h[i] -= f * h[k];
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let mut acc = h[k];
        for j in k + 1..3 {
            acc -= g[k][j] * x[j];
        }
        x[k] = if g[k][k].abs() < 1e-300 {
            0.0
        } else {
            acc / g[k][k]
        };
    }
    x
}

/// Propagate `s0` through `t_steps - 1` discrete steps.
///
/// `trajectory[0] = s0`, `trajectory[k+1] = A·trajectory[k] + B·controls[k]`.
pub fn propagate(
    s0: &State6,
    controls: &[Control3],
    dyn_: &DiscreteDynamics,
    t_steps: usize,
) -> Result<Trajectory, DynamicsError> {
    if controls.len() + 1 != t_steps {
        return Err(DynamicsError::ControlLengthMismatch {
            expected: t_steps.saturating_sub(1),
            got: controls.len(),
            t_steps,
        });
    }
    let mut traj = Vec::with_capacity(t_steps);
    traj.push(*s0);
    for u in controls {
        let next = dyn_.step(traj.last().unwrap(), u);
        traj.push(next);
    }
    Ok(traj)
}

/// An energy-matched passive relative orbit.
///
/// In-plane motion is the 2:1 CW ellipse with along-track amplitude
/// `a_semi` (the x-amplitude is half of it); `slant` tilts the orbit plane
/// about the along-track axis by putting z in phase with x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pro {
    /// Along-track (y) amplitude of the relative ellipse (m).
    pub a_semi: f64,
    /// Initial phase angle (rad).
    pub phase: f64,
    /// Out-of-plane tilt angle (rad), in (-pi/2, pi/2).
    pub slant: f64,
    /// Along-track center offset (m).
    pub y_offset: f64,
}

impl Pro {
    pub fn new(a_semi: f64, phase: f64, slant: f64, y_offset: f64) -> Result<Self, DynamicsError> {
        if a_semi < 0.0 {
            return Err(DynamicsError::NegativeSemiMajorAxis(a_semi));
        }
        if !(slant.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(DynamicsError::SlantOutOfRange(slant));
        }
        Ok(Self {
            a_semi,
            phase,
            slant,
            y_offset,
        })
    }
}

/// State on a PRO at time `t`.
///
/// x(t) = (a/2)·sin(e·t + φ), y(t) = a·cos(e·t + φ) + y_off,
/// z(t) = (a/2)·tan(slant)·sin(e·t + φ). The returned state satisfies
/// ẏ = -2e·x identically, so it drifts freely under the CW dynamics.
pub fn pro_state(pro: &Pro, params: &CwParams, t: f64) -> Result<State6, DynamicsError> {
    if !(pro.slant.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(DynamicsError::SlantOutOfRange(pro.slant));
    }
    if pro.a_semi < 0.0 {
        return Err(DynamicsError::NegativeSemiMajorAxis(pro.a_semi));
    }
    let e = params.e_mean;
    let ang = e * t + pro.phase;
    let (s, c) = ang.sin_cos();
    let ax = pro.a_semi / 2.0;
    let az = ax * pro.slant.tan();
    Ok(State6 {
        p: [ax * s, pro.a_semi * c + pro.y_offset, az * s],
        v: [ax * e * c, -pro.a_semi * e * s, az * e * c],
    })
}
