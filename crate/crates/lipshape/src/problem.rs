//! Problem data: monotone nonlinearity `g`, source `f` with gradient, and
//! integrand `j(x, u, z)` with the partial derivatives used by the adjoint
//! equation and the shape derivative. Ships the tracking instance used by
//! the experiments.

use crate::mat2::Point2;
use crate::mesh::Rect;
use crate::{Error, Result};

type Scalar1 = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type ScalarX = Box<dyn Fn(Point2) -> f64 + Send + Sync>;
type VectorX = Box<dyn Fn(Point2) -> Point2 + Send + Sync>;
type ScalarJ = Box<dyn Fn(Point2, f64, Point2) -> f64 + Send + Sync>;
type VectorJ = Box<dyn Fn(Point2, f64, Point2) -> Point2 + Send + Sync>;

/// The data tuple of one shape-optimization problem. All functions are pure;
/// the struct is immutable and shareable across threads.
pub struct ProblemSpec {
    g: Scalar1,
    g_prime: Scalar1,
    g_second: Scalar1,
    f: ScalarX,
    grad_f: VectorX,
    j: ScalarJ,
    j_u: ScalarJ,
    j_z: VectorJ,
    j_x: VectorJ,
    holdall: Rect,
}

#[allow(clippy::too_many_arguments)]
impl ProblemSpec {
    /// Builds a problem, checking monotonicity of `g` by deterministic
    /// sampling (`g'(t) >= 0` is required for well-posedness of the state
    /// equation and positive definiteness of the Newton systems).
    pub fn new(
        g: Scalar1,
        g_prime: Scalar1,
        g_second: Scalar1,
        f: ScalarX,
        grad_f: VectorX,
        j: ScalarJ,
        j_u: ScalarJ,
        j_z: VectorJ,
        j_x: VectorJ,
        holdall: Rect,
    ) -> Result<ProblemSpec> {
        let mut rng = SplitMix64::new(0x5eed_1234_abcd_0001);
        for _ in 0..256 {
            let t = rng.uniform(-4.0, 4.0);
            if g_prime(t) < -1e-12 {
                return Err(Error::ProblemData {
                    field: "g'".into(),
                    detail: format!("g'({t}) = {} < 0 violates monotonicity", g_prime(t)),
                });
            }
        }
        Ok(ProblemSpec {
            g,
            g_prime,
            g_second,
            f,
            grad_f,
            j,
            j_u,
            j_z,
            j_x,
            holdall,
        })
    }

    pub fn g(&self, t: f64) -> f64 {
        (self.g)(t)
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        (self.g_prime)(t)
    }

    pub fn g_second(&self, t: f64) -> f64 {
        (self.g_second)(t)
    }

    pub fn f(&self, x: Point2) -> f64 {
        (self.f)(x)
    }

    pub fn grad_f(&self, x: Point2) -> Point2 {
        (self.grad_f)(x)
    }

    pub fn j(&self, x: Point2, u: f64, z: Point2) -> f64 {
        (self.j)(x, u, z)
    }

    pub fn j_u(&self, x: Point2, u: f64, z: Point2) -> f64 {
        (self.j_u)(x, u, z)
    }

    pub fn j_z(&self, x: Point2, u: f64, z: Point2) -> Point2 {
        (self.j_z)(x, u, z)
    }

    pub fn j_x(&self, x: Point2, u: f64, z: Point2) -> Point2 {
        (self.j_x)(x, u, z)
    }

    pub fn holdall(&self) -> Rect {
        self.holdall
    }
}

/// Radius at which the reference profile of the tracking instance vanishes;
/// the expected limit ball of the non-degenerate experiment has this radius.
pub fn reference_radius() -> f64 {
    4.0 / (3.0 * std::f64::consts::PI).sqrt()
}

/// The tracking instance: `g(t) = exp(t) / 2`, source chosen so that the
/// radial profile `u*(x) = 4/(3 pi) - |x|^2 / 4` solves the state equation
/// on the disk where it vanishes, and `j(x, u, z) = (u - u_d(x))^2 / 2` with
/// `u_d(x) = 4/pi - |x|^2`.
pub fn tracking_instance(holdall: Rect) -> ProblemSpec {
    let u_star = |x: Point2| 4.0 / (3.0 * std::f64::consts::PI) - (x[0] * x[0] + x[1] * x[1]) / 4.0;
    let u_d = |x: Point2| 4.0 / std::f64::consts::PI - (x[0] * x[0] + x[1] * x[1]);
    ProblemSpec::new(
        Box::new(|t| 0.5 * t.exp()),
        Box::new(|t| 0.5 * t.exp()),
        Box::new(|t| 0.5 * t.exp()),
        Box::new(move |x| 1.0 + 0.5 * u_star(x).exp()),
        Box::new(move |x| {
            let gp = 0.5 * u_star(x).exp();
            [-0.5 * gp * x[0], -0.5 * gp * x[1]]
        }),
        Box::new(move |x, u, _z| {
            let d = u - u_d(x);
            0.5 * d * d
        }),
        Box::new(move |x, u, _z| u - u_d(x)),
        Box::new(|_x, _u, _z| [0.0, 0.0]),
        Box::new(move |x, u, _z| {
            let d = u - u_d(x);
            [2.0 * d * x[0], 2.0 * d * x[1]]
        }),
        holdall,
    )
    .expect("tracking instance data is consistent")
}

/// Outcome of one finite-difference consistency check.
#[derive(Clone, Debug)]
pub struct FieldCheck {
    pub field: &'static str,
    pub max_rel_mismatch: f64,
}

/// Report of [`verify_derivative_consistency`].
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub checks: Vec<FieldCheck>,
    pub threshold: f64,
}

impl ConsistencyReport {
    pub fn pass(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.max_rel_mismatch <= self.threshold)
    }

    /// The worst offending field, if any check failed.
    pub fn offender(&self) -> Option<&FieldCheck> {
        self.checks
            .iter()
            .filter(|c| c.max_rel_mismatch > self.threshold)
            .max_by(|a, b| a.max_rel_mismatch.partial_cmp(&b.max_rel_mismatch).unwrap())
    }

    pub fn ensure(&self) -> Result<()> {
        match self.offender() {
            None => Ok(()),
            Some(c) => Err(Error::ProblemData {
                field: c.field.to_string(),
                detail: format!(
                    "finite-difference mismatch {:.3e} exceeds threshold {:.3e}",
                    c.max_rel_mismatch, self.threshold
                ),
            }),
        }
    }
}

/// Compares every supplied derivative of a [`ProblemSpec`] against central
/// finite differences at deterministic sample points. Passes when the
/// maximum relative mismatch stays below `100 h^2`.
pub fn verify_derivative_consistency(
    spec: &ProblemSpec,
    samples: usize,
    h: f64,
) -> ConsistencyReport {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut rng = SplitMix64::new(0x5eed_99f0_77aa_0002);
    let d = spec.holdall();
    let mut checks = vec![
        FieldCheck {
            field: "g'",
            max_rel_mismatch: 0.0,
        },
        FieldCheck {
            field: "g''",
            max_rel_mismatch: 0.0,
        },
        FieldCheck {
            field: "grad_f",
            max_rel_mismatch: 0.0,
        },
        FieldCheck {
            field: "j_u",
            max_rel_mismatch: 0.0,
        },
        FieldCheck {
            field: "j_z",
            max_rel_mismatch: 0.0,
        },
        FieldCheck {
            field: "j_x",
            max_rel_mismatch: 0.0,
        },
    ];
    let rel = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1.0);
    for _ in 0..samples {
        let t = rng.uniform(-2.0, 2.0);
        let x = [
            rng.uniform(d.min[0] + h, d.max[0] - h),
            rng.uniform(d.min[1] + h, d.max[1] - h),
        ];
        let u = rng.uniform(-2.0, 2.0);
        let z = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];

        let fd_gp = (spec.g(t + h) - spec.g(t - h)) / (2.0 * h);
        checks[0].max_rel_mismatch = checks[0].max_rel_mismatch.max(rel(fd_gp, spec.g_prime(t)));

        let fd_gpp = (spec.g_prime(t + h) - spec.g_prime(t - h)) / (2.0 * h);
        checks[1].max_rel_mismatch = checks[1]
            .max_rel_mismatch
            .max(rel(fd_gpp, spec.g_second(t)));

        let gf = spec.grad_f(x);
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (spec.f(xp) - spec.f(xm)) / (2.0 * h);
            checks[2].max_rel_mismatch = checks[2].max_rel_mismatch.max(rel(fd, gf[c]));
        }

        let fd_ju = (spec.j(x, u + h, z) - spec.j(x, u - h, z)) / (2.0 * h);
        checks[3].max_rel_mismatch = checks[3]
            .max_rel_mismatch
            .max(rel(fd_ju, spec.j_u(x, u, z)));

        let jz = spec.j_z(x, u, z);
        for c in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[c] += h;
            zm[c] -= h;
            let fd = (spec.j(x, u, zp) - spec.j(x, u, zm)) / (2.0 * h);
            checks[4].max_rel_mismatch = checks[4].max_rel_mismatch.max(rel(fd, jz[c]));
        }

        let jx = spec.j_x(x, u, z);
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (spec.j(xp, u, z) - spec.j(xm, u, z)) / (2.0 * h);
            checks[5].max_rel_mismatch = checks[5].max_rel_mismatch.max(rel(fd, jx[c]));
        }
    }
    ConsistencyReport {
        checks,
        threshold: 100.0 * h * h,
    }
}

/// Deterministic pseudo-random numbers for self-checks; not used anywhere
/// in the solve path.
struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let unit = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * unit
    }
}
