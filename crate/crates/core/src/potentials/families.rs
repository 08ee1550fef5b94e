//! Analytic potential families selectable from config files.
//!
//! Every scalar profile knows its value and its spatial gradient in closed
//! form, which lets vector fields be built as exact curls or gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    #[default]
    Constant,
    /// `1 + depth * sin(2 pi freq t + phase)`
    Sine { freq: f64, depth: f64, #[serde(default)] phase: f64 },
    /// `a + b t`
    Linear { a: f64, b: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Sine { freq, depth, phase } => 1.0 + depth * (2.0 * PI * freq * t + phase).sin(),
            TimeProfile::Linear { a, b } => a + b * t,
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 0.0,
            TimeProfile::Sine { freq, depth, phase } => {
                depth * 2.0 * PI * freq * (2.0 * PI * freq * t + phase).cos()
            }
            TimeProfile::Linear { b, .. } => b,
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            TimeProfile::Constant => true,
            TimeProfile::Sine { depth, .. } => depth == 0.0,
            TimeProfile::Linear { b, .. } => b == 0.0,
        }
    }
}

/// `exp(1 - 1/(1 - s^2))` for `|s| < 1`, zero elsewhere.
pub fn smooth_bump(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarProfile {
    #[default]
    Zero,
    Constant { value: f64 },
    /// Compactly supported C-infinity bump of the given radius.
    Bump {
        center: [f64; 2],
        radius: f64,
        amp: f64,
        #[serde(default)]
        time: TimeProfile,
    },
    /// `amp (1 - r^2/radius^2)^order` inside the disc; `C^(order-1)`.
    Poly {
        center: [f64; 2],
        radius: f64,
        order: u32,
        amp: f64,
        #[serde(default)]
        time: TimeProfile,
    },
    Gaussian {
        center: [f64; 2],
        width: f64,
        amp: f64,
        #[serde(default)]
        time: TimeProfile,
    },
    /// `amp sin(m pi x) sin(n pi y)`
    Trig {
        m: u32,
        n: u32,
        amp: f64,
        #[serde(default)]
        time: TimeProfile,
    },
    Sum { terms: Vec<ScalarProfile> },
}

impl ScalarProfile {
    /// Spatial factor of a leaf profile, without amplitude or time weight.
    fn unit(&self, x: f64, y: f64) -> f64 {
        match self {
            ScalarProfile::Bump { center, radius, .. } => {
                smooth_bump(((x - center[0]).powi(2) + (y - center[1]).powi(2)) / (radius * radius))
            }
            ScalarProfile::Poly { center, radius, order, .. } => {
                let s2 = ((x - center[0]).powi(2) + (y - center[1]).powi(2)) / (radius * radius);
                if s2 >= 1.0 {
                    0.0
                } else {
                    (1.0 - s2).powi(*order as i32)
                }
            }
            ScalarProfile::Gaussian { center, width, .. } => {
                (-((x - center[0]).powi(2) + (y - center[1]).powi(2)) / (2.0 * width * width)).exp()
            }
            ScalarProfile::Trig { m, n, .. } => (*m as f64 * PI * x).sin() * (*n as f64 * PI * y).sin(),
            _ => 0.0,
        }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            ScalarProfile::Zero => 0.0,
            ScalarProfile::Constant { value } => *value,
            ScalarProfile::Bump { amp, time, .. }
            | ScalarProfile::Poly { amp, time, .. }
            | ScalarProfile::Gaussian { amp, time, .. }
            | ScalarProfile::Trig { amp, time, .. } => amp * time.eval(t) * self.unit(x, y),
            ScalarProfile::Sum { terms } => terms.iter().map(|p| p.eval(t, x, y)).sum(),
        }
    }

    pub fn grad(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        match self {
            ScalarProfile::Zero | ScalarProfile::Constant { .. } => [0.0, 0.0],
            ScalarProfile::Bump { center, radius, amp, time } => {
                let dx = x - center[0];
                let dy = y - center[1];
                let r2 = radius * radius;
                let s2 = (dx * dx + dy * dy) / r2;
                if s2 >= 1.0 {
                    return [0.0, 0.0];
                }
                let b = smooth_bump(s2);
                let f = amp * time.eval(t) * b * (-2.0 / (r2 * (1.0 - s2).powi(2)));
                [f * dx, f * dy]
            }
            ScalarProfile::Poly { center, radius, order, amp, time } => {
                let dx = x - center[0];
                let dy = y - center[1];
                let r2 = radius * radius;
                let s2 = (dx * dx + dy * dy) / r2;
                if s2 >= 1.0 || *order == 0 {
                    return [0.0, 0.0];
                }
                let f = amp * time.eval(t) * (*order as f64) * (1.0 - s2).powi(*order as i32 - 1) * (-2.0 / r2);
                [f * dx, f * dy]
            }
            ScalarProfile::Gaussian { center, width, amp, time } => {
                let dx = x - center[0];
                let dy = y - center[1];
                let w2 = width * width;
                let g = amp * time.eval(t) * (-(dx * dx + dy * dy) / (2.0 * w2)).exp();
                [-g * dx / w2, -g * dy / w2]
            }
            ScalarProfile::Trig { m, n, amp, time } => {
                let (a, b) = (*m as f64 * PI, *n as f64 * PI);
                let c = amp * time.eval(t);
                [c * a * (a * x).cos() * (b * y).sin(), c * b * (a * x).sin() * (b * y).cos()]
            }
            ScalarProfile::Sum { terms } => terms.iter().fold([0.0, 0.0], |acc, p| {
                let g = p.grad(t, x, y);
                [acc[0] + g[0], acc[1] + g[1]]
            }),
        }
    }

    pub fn dt(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            ScalarProfile::Zero | ScalarProfile::Constant { .. } => 0.0,
            ScalarProfile::Bump { amp, time, .. }
            | ScalarProfile::Poly { amp, time, .. }
            | ScalarProfile::Gaussian { amp, time, .. }
            | ScalarProfile::Trig { amp, time, .. } => amp * time.deriv(t) * self.unit(x, y),
            ScalarProfile::Sum { terms } => terms.iter().map(|p| p.dt(t, x, y)).sum(),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            ScalarProfile::Zero | ScalarProfile::Constant { .. } => true,
            ScalarProfile::Bump { time, .. }
            | ScalarProfile::Poly { time, .. }
            | ScalarProfile::Gaussian { time, .. }
            | ScalarProfile::Trig { time, .. } => time.is_constant(),
            ScalarProfile::Sum { terms } => terms.iter().all(|p| p.is_time_independent()),
        }
    }

    pub fn scaled(&self, s: f64) -> ScalarProfile {
        let mut p = self.clone();
        p.scale_in_place(s);
        p
    }

    fn scale_in_place(&mut self, s: f64) {
        match self {
            ScalarProfile::Zero => {}
            ScalarProfile::Constant { value } => *value *= s,
            ScalarProfile::Bump { amp, .. }
            | ScalarProfile::Poly { amp, .. }
            | ScalarProfile::Gaussian { amp, .. }
            | ScalarProfile::Trig { amp, .. } => *amp *= s,
            ScalarProfile::Sum { terms } => terms.iter_mut().for_each(|p| p.scale_in_place(s)),
        }
    }

    /// Sum of `count` bumps with centres, radii and amplitudes drawn from
    /// a seeded generator. Every bump stays inside `[margin, 1-margin]^2`.
    pub fn random_bumps(seed: u64, count: usize, amp: f64, margin: f64, time_dependent: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = (0..count)
            .map(|_| {
                let radius = rng.random_range(0.15..0.3f64).min(0.5 - margin - 1e-3);
                let lo = margin + radius;
                let hi = 1.0 - margin - radius;
                let center = [rng.random_range(lo..hi), rng.random_range(lo..hi)];
                let a = amp * rng.random_range(-1.0..1.0f64);
                let time = if time_dependent {
                    TimeProfile::Sine {
                        freq: rng.random_range(0.5..1.5),
                        depth: rng.random_range(0.1..0.5),
                        phase: rng.random_range(0.0..2.0 * PI),
                    }
                } else {
                    TimeProfile::Constant
                };
                ScalarProfile::Bump { center, radius, amp: a, time }
            })
            .collect();
        ScalarProfile::Sum { terms }
    }

    /// Random low trigonometric modes; vanishes on the walls.
    pub fn random_trig(seed: u64, modes: u32, amp: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for m in 1..=modes {
            for n in 1..=modes {
                let a = amp * rng.random_range(-1.0..1.0f64) / (m * n) as f64;
                let time = TimeProfile::Linear { a: rng.random_range(0.5..1.0), b: rng.random_range(-0.5..0.5) };
                terms.push(ScalarProfile::Trig { m, n, amp: a, time });
            }
        }
        ScalarProfile::Sum { terms }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorProfile {
    #[default]
    Zero,
    Uniform { value: [f64; 2] },
    /// Exact rotated gradient `(d_y psi, -d_x psi)`; divergence free.
    Curl { stream: ScalarProfile },
    Gradient { potential: ScalarProfile },
    Components { x: ScalarProfile, y: ScalarProfile },
    Sum { terms: Vec<VectorProfile> },
}

impl VectorProfile {
    pub fn eval(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        match self {
            VectorProfile::Zero => [0.0, 0.0],
            VectorProfile::Uniform { value } => *value,
            VectorProfile::Curl { stream } => {
                let g = stream.grad(t, x, y);
                [g[1], -g[0]]
            }
            VectorProfile::Gradient { potential } => potential.grad(t, x, y),
            VectorProfile::Components { x: px, y: py } => [px.eval(t, x, y), py.eval(t, x, y)],
            VectorProfile::Sum { terms } => terms.iter().fold([0.0, 0.0], |acc, p| {
                let v = p.eval(t, x, y);
                [acc[0] + v[0], acc[1] + v[1]]
            }),
        }
    }

    /// `eval` with curls taken by centred differences of step `(h, hy)`.
    pub fn eval_discrete(&self, t: f64, x: f64, y: f64, h: f64, hy: f64) -> [f64; 2] {
        match self {
            VectorProfile::Curl { stream } => [
                (stream.eval(t, x, y + hy) - stream.eval(t, x, y - hy)) / (2.0 * hy),
                -(stream.eval(t, x + h, y) - stream.eval(t, x - h, y)) / (2.0 * h),
            ],
            VectorProfile::Sum { terms } => terms.iter().fold([0.0, 0.0], |acc, p| {
                let v = p.eval_discrete(t, x, y, h, hy);
                [acc[0] + v[0], acc[1] + v[1]]
            }),
            other => other.eval(t, x, y),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            VectorProfile::Zero | VectorProfile::Uniform { .. } => true,
            VectorProfile::Curl { stream } => stream.is_time_independent(),
            VectorProfile::Gradient { potential } => potential.is_time_independent(),
            VectorProfile::Components { x, y } => x.is_time_independent() && y.is_time_independent(),
            VectorProfile::Sum { terms } => terms.iter().all(|p| p.is_time_independent()),
        }
    }

    pub fn scaled(&self, s: f64) -> VectorProfile {
        match self {
            VectorProfile::Zero => VectorProfile::Zero,
            VectorProfile::Uniform { value } => VectorProfile::Uniform { value: [value[0] * s, value[1] * s] },
            VectorProfile::Curl { stream } => VectorProfile::Curl { stream: stream.scaled(s) },
            VectorProfile::Gradient { potential } => VectorProfile::Gradient { potential: potential.scaled(s) },
            VectorProfile::Components { x, y } => VectorProfile::Components { x: x.scaled(s), y: y.scaled(s) },
            VectorProfile::Sum { terms } => VectorProfile::Sum { terms: terms.iter().map(|p| p.scaled(s)).collect() },
        }
    }
}

/// Analytic description of one electromagnetic potential `(A, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct PotentialSpec {
    #[serde(default)]
    pub a: VectorProfile,
    #[serde(default)]
    pub q: ScalarProfile,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_time_independent(&self) -> bool {
        self.a.is_time_independent() && self.q.is_time_independent()
    }

    pub fn plus(&self, other: &PotentialSpec) -> PotentialSpec {
        PotentialSpec {
            a: VectorProfile::Sum { terms: vec![self.a.clone(), other.a.clone()] },
            q: ScalarProfile::Sum { terms: vec![self.q.clone(), other.q.clone()] },
        }
    }

    pub fn scaled(&self, s: f64) -> PotentialSpec {
        PotentialSpec { a: self.a.scaled(s), q: self.q.scaled(s) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(p: &ScalarProfile, t: f64, x: f64, y: f64) -> [f64; 2] {
        let e = 1e-6;
        [
            (p.eval(t, x + e, y) - p.eval(t, x - e, y)) / (2.0 * e),
            (p.eval(t, x, y + e) - p.eval(t, x, y - e)) / (2.0 * e),
        ]
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let profiles = [
            ScalarProfile::Bump { center: [0.5, 0.45], radius: 0.3, amp: 1.3, time: TimeProfile::Constant },
            ScalarProfile::Gaussian { center: [0.4, 0.6], width: 0.2, amp: -0.7, time: TimeProfile::Constant },
            ScalarProfile::Poly { center: [0.45, 0.5], radius: 0.35, order: 4, amp: 0.9, time: TimeProfile::Constant },
            ScalarProfile::Trig { m: 2, n: 3, amp: 0.5, time: TimeProfile::Linear { a: 1.0, b: 0.5 } },
        ];
        for p in &profiles {
            for &(x, y) in &[(0.5, 0.5), (0.41, 0.37), (0.62, 0.55), (0.3, 0.7)] {
                let g = p.grad(0.3, x, y);
                let f = fd_grad(p, 0.3, x, y);
                assert!((g[0] - f[0]).abs() < 1e-6 && (g[1] - f[1]).abs() < 1e-6, "{p:?} at {x},{y}");
            }
        }
    }

    #[test]
    fn time_derivative_matches_difference() {
        let p = ScalarProfile::Bump {
            center: [0.5, 0.5],
            radius: 0.3,
            amp: 1.0,
            time: TimeProfile::Sine { freq: 1.0, depth: 0.4, phase: 0.3 },
        };
        let e = 1e-6;
        let fd = (p.eval(0.4 + e, 0.5, 0.55) - p.eval(0.4 - e, 0.5, 0.55)) / (2.0 * e);
        assert!((p.dt(0.4, 0.5, 0.55) - fd).abs() < 1e-7);
    }

    #[test]
    fn bumps_vanish_outside_support() {
        let p = ScalarProfile::random_bumps(7, 3, 1.0, 0.1, true);
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            for (x, y) in [(s, 0.0), (s, 1.0), (0.0, s), (1.0, s), (s, 0.05), (0.05, s)] {
                assert_eq!(p.eval(0.2, x, y), 0.0);
            }
        }
    }

    #[test]
    fn spec_roundtrips_through_toml() {
        let spec = PotentialSpec {
            a: VectorProfile::Curl {
                stream: ScalarProfile::Bump { center: [0.5, 0.5], radius: 0.3, amp: 0.1, time: TimeProfile::Constant },
            },
            q: ScalarProfile::Trig { m: 1, n: 1, amp: 2.0, time: TimeProfile::Constant },
        };
        let text = toml::to_string(&spec).unwrap();
        let back: PotentialSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
