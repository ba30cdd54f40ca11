use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::correctors::{homogenized_matrix, CorrectorTable};
use crate::error::{contract, Error, Result};
use crate::homogop::construct::{a_harmonic_defect, build_a_harmonic, random_seed};
use crate::homogop::hetero::{HeterogeneousPolynomial, PsiPart};
use crate::homogop::operator::HomogenizedOperator;
use crate::polyalg::norms::{l2_norm_ellipsoid, l2_norm_ellipsoid_avg, Ellipsoid};
use crate::polyalg::polynomial::Polynomial;
use crate::verify::quadrature::{LatticeIntegrand, LatticeQuadrature, QuadratureResult};

/// Band for the fitted slope of `log|ratio − 1|` against `log r`.
pub const R_SLOPE_BAND: (f64, f64) = (-1.3, -0.7);
/// Upper bound for the fitted slope of `log|ratio − 1|` against `log m`.
pub const M_SLOPE_MAX: f64 = 5.0;
/// Allowed relative variation of the doubling profile over `r ≥ m⁴`.
pub const FLATNESS_TOL: f64 = 0.10;
/// Thresholds on `ratio − 1` for the minimal-scale probe.
pub const PROBE_THRESHOLDS: [f64; 3] = [0.5, 1.0, 2.0];
/// Largest relative `|𝒜q|` accepted for a studied polynomial.
pub const DEFECT_TOL: f64 = 1e-9;

fn default_theta() -> f64 {
    0.5
}

fn default_seeds() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub m_list: Vec<u32>,
    pub r_list: Vec<f64>,
    /// Random harmonic seeds per degree.
    #[serde(default = "default_seeds")]
    pub seeds_per_degree: usize,
    /// Samples per unit length; must equal the corrector grid resolution.
    #[serde(default)]
    pub quadrature_n: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 0.5) {
            return contract(format!("theta = {} not in (0, 1/2]", self.theta));
        }
        if self.m_list.is_empty() || self.r_list.is_empty() {
            return contract("m_list and r_list must be non-empty");
        }
        if self.seeds_per_degree == 0 {
            return contract("seeds_per_degree must be positive");
        }
        if self.r_list.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return contract("radii must be positive and finite");
        }
        if self.r_list.windows(2).any(|w| w[0] >= w[1]) {
            return contract("r_list must be strictly ascending");
        }
        let m_top = *self.m_list.iter().max().unwrap() as f64;
        if self.r_list[0] < 4.0 * m_top {
            return contract(format!(
                "every radius must be at least 4·m = {}",
                4.0 * m_top
            ));
        }
        if let Some(q) = self.quadrature_n {
            if q < crate::verify::quadrature::MIN_SAMPLES_PER_UNIT {
                return Err(Error::Quadrature(format!("{q} samples per unit cell")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioMeasurement {
    pub r: f64,
    pub theta: f64,
    /// Volume-normalized norms on `E_{θ²r}`, `E_{θr}`, `E_r`.
    pub norm_inner: f64,
    pub norm_mid: f64,
    pub norm_outer: f64,
    /// `‖f‖²_{L²(E_{θr})} / (‖f‖_{L²(E_{θ²r})}‖f‖_{L²(E_r)})`.
    pub three_ratio: f64,
    /// `‖f‖_{\underline{L}²(E_r)} / ‖f‖_{\underline{L}²(E_{θr})}`.
    pub doubling_ratio: f64,
    /// Change of `three_ratio` when every norm is taken on the stride-2 lattice.
    pub quad_err: f64,
}

// |E_θr|² = |E_θ²r|·|E_r|, so volume normalization cancels in the three-ellipsoid ratio.
fn three_from_normalized(inner: f64, mid: f64, outer: f64) -> f64 {
    mid * mid / (inner * outer)
}

fn measurement(r: f64, theta: f64, n: [QuadratureResult; 3]) -> Result<RatioMeasurement> {
    let [i, m, o] = n;
    if i.value <= 0.0 || m.value <= 0.0 {
        return Err(Error::ZeroNorm(format!(
            "function vanishes on the inner ellipsoid at r = {r}"
        )));
    }
    let fine = three_from_normalized(i.value, m.value, o.value);
    let coarse = three_from_normalized(i.coarse, m.coarse, o.coarse);
    Ok(RatioMeasurement {
        r,
        theta,
        norm_inner: i.value,
        norm_mid: m.value,
        norm_outer: o.value,
        three_ratio: fine,
        doubling_ratio: o.value / m.value,
        quad_err: (fine - coarse).abs(),
    })
}

/// Three-ellipsoid and doubling ratios of a lattice integrand at scale `r`.
pub fn three_ellipsoid_ratio(
    quad: &LatticeQuadrature,
    f: &dyn LatticeIntegrand,
    r: f64,
    theta: f64,
) -> Result<RatioMeasurement> {
    let n = [
        quad.norm(f, theta * theta * r)?,
        quad.norm(f, theta * r)?,
        quad.norm(f, r)?,
    ];
    measurement(r, theta, n)
}

/// Closed-form ratios of a polynomial (no quadrature).
pub fn three_ellipsoid_ratio_poly(
    p: &Polynomial<f64>,
    r: f64,
    theta: f64,
    abar: &DMatrix<f64>,
) -> Result<RatioMeasurement> {
    let e = |s: f64| Ellipsoid::new(abar.clone(), s);
    let norms: Vec<f64> = [theta * theta * r, theta * r, r]
        .iter()
        .map(|&s| l2_norm_ellipsoid(p, &e(s)?))
        .collect::<Result<_>>()?;
    if norms[0] <= 0.0 {
        return Err(Error::ZeroNorm(format!(
            "polynomial vanishes on E_{}",
            theta * theta * r
        )));
    }
    let avg: Vec<f64> = [theta * theta * r, theta * r, r]
        .iter()
        .map(|&s| l2_norm_ellipsoid_avg(p, &e(s)?))
        .collect::<Result<_>>()?;
    Ok(RatioMeasurement {
        r,
        theta,
        norm_inner: avg[0],
        norm_mid: avg[1],
        norm_outer: avg[2],
        three_ratio: norms[1] * norms[1] / (norms[0] * norms[2]),
        doubling_ratio: avg[2] / avg[1],
        quad_err: 0.0,
    })
}

/// `‖f‖_{\underline{L}²(E_r)} / ‖f‖_{\underline{L}²(E_{θr})}` for each `r`.
pub fn doubling_profile(
    quad: &LatticeQuadrature,
    f: &dyn LatticeIntegrand,
    r_list: &[f64],
    theta: f64,
) -> Result<Vec<f64>> {
    r_list
        .iter()
        .map(|&r| {
            let inner = quad.norm(f, theta * r)?.value;
            if inner <= 0.0 {
                return Err(Error::ZeroNorm(format!(
                    "function vanishes on E_{}",
                    theta * r
                )));
            }
            Ok(quad.norm(f, r)?.value / inner)
        })
        .collect()
}

pub fn doubling_profile_poly(
    p: &Polynomial<f64>,
    r_list: &[f64],
    theta: f64,
    abar: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    r_list
        .iter()
        .map(|&r| {
            let inner = l2_norm_ellipsoid_avg(p, &Ellipsoid::new(abar.clone(), theta * r)?)?;
            if inner <= 0.0 {
                return Err(Error::ZeroNorm(format!(
                    "polynomial vanishes on E_{}",
                    theta * r
                )));
            }
            Ok(l2_norm_ellipsoid_avg(p, &Ellipsoid::new(abar.clone(), r)?)? / inner)
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub m: u32,
    pub seed: usize,
    #[serde(flatten)]
    pub ratios: RatioMeasurement,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub m: u32,
    pub seed: usize,
    /// Rows whose `|three_ratio − 1|` exceeds their quadrature error.
    pub points: usize,
    pub slope: Option<f64>,
    /// Every `|three_ratio − 1|` is within its quadrature error.
    pub at_floor: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeFit {
    pub r: f64,
    pub seed: usize,
    pub slope: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Flatness {
    pub m: u32,
    pub seed: usize,
    /// Radii with `r ≥ m⁴` available in the study.
    pub points: usize,
    pub variation: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Monotonicity {
    pub m: u32,
    pub seed: usize,
    pub inversions: usize,
    pub pass: bool,
}

/// Contract check on the polynomial `q` underlying one `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsiCheck {
    pub m: u32,
    pub seed: usize,
    pub a_harmonic_defect: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFlags {
    /// Every `q` satisfies `𝒜q = 0` to [`DEFECT_TOL`].
    pub a_harmonic: bool,
    pub r_slope: bool,
    pub m_slope: bool,
    pub flatness: bool,
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rng_seed: u64,
    pub theta: f64,
    pub samples_per_unit: usize,
    pub negative_control: bool,
    pub abar: Vec<Vec<f64>>,
    pub rows: Vec<ScalingRow>,
    pub psi_checks: Vec<PsiCheck>,
    pub r_fits: Vec<SlopeFit>,
    pub m_fits: Vec<DegreeFit>,
    pub flatness: Vec<Flatness>,
    pub monotonicity: Vec<Monotonicity>,
    pub flags: ScalingFlags,
    /// Smallest three-ellipsoid ratio seen; reported, not asserted.
    pub min_three_ratio: f64,
    pub errors: Vec<String>,
    pub pass: bool,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "m,r,theta,norm_inner,norm_mid,norm_outer,three_ratio,doubling_ratio,quad_err\n",
        );
        for row in &self.rows {
            let r = &row.ratios;
            writeln!(
                s,
                "{},{},{},{:e},{:e},{:e},{:.17e},{:.17e},{:e}",
                row.m,
                r.r,
                r.theta,
                r.norm_inner,
                r.norm_mid,
                r.norm_outer,
                r.three_ratio,
                r.doubling_ratio,
                r.quad_err
            )
            .unwrap();
        }
        s
    }

    /// Summary without the per-row data.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            rng_seed: u64,
            theta: f64,
            samples_per_unit: usize,
            negative_control: bool,
            abar: &'a [Vec<f64>],
            rows: usize,
            psi_checks: &'a [PsiCheck],
            r_fits: &'a [SlopeFit],
            m_fits: &'a [DegreeFit],
            flatness: &'a [Flatness],
            monotonicity: &'a [Monotonicity],
            flags: &'a ScalingFlags,
            min_three_ratio: f64,
            errors: &'a [String],
            pass: bool,
        }
        let s = Summary {
            rng_seed: self.rng_seed,
            theta: self.theta,
            samples_per_unit: self.samples_per_unit,
            negative_control: self.negative_control,
            abar: &self.abar,
            rows: self.rows.len(),
            psi_checks: &self.psi_checks,
            r_fits: &self.r_fits,
            m_fits: &self.m_fits,
            flatness: &self.flatness,
            monotonicity: &self.monotonicity,
            flags: &self.flags,
            min_three_ratio: self.min_three_ratio,
            errors: &self.errors,
            pass: self.pass,
        };
        serde_json::to_string_pretty(&s).expect("serializable") + "\n"
    }
}

/// The polynomials studied for degree `m`: `𝒜`-harmonic `q` built from random
/// seeds, or the bare seeds when `negative_control` is set.
pub fn study_polynomials(
    op: &HomogenizedOperator<f64>,
    m: u32,
    count: usize,
    rng_seed: u64,
    negative_control: bool,
) -> Result<Vec<Polynomial<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ ((m as u64) << 32));
    (0..count)
        .map(|_| {
            let seed = random_seed(&op.abar_matrix(), m, &mut rng)?;
            Ok(if negative_control {
                seed
            } else {
                build_a_harmonic(op, &seed)?.q
            })
        })
        .collect()
}

// The ratio may fall on either side of 1 (below it for ā-harmonic mixtures), so
// decay is measured on the magnitude.
fn excess(row: &ScalingRow) -> f64 {
    (row.ratios.three_ratio - 1.0).abs()
}

fn count_inversions(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Runs the `(m, r)` grid of measurements on `ψ` built from `table`.
pub fn run_scaling_study(
    cfg: &ScalingConfig,
    table: &CorrectorTable,
    negative_control: bool,
) -> Result<ScalingReport> {
    cfg.validate()?;
    let m_top = *cfg.m_list.iter().max().unwrap();
    if (m_top as usize) > table.m_max() {
        return Err(Error::TableTooShort {
            have: table.m_max(),
            need: m_top as usize,
        });
    }
    let n = table.n();
    if let Some(q) = cfg.quadrature_n {
        if q != n {
            return Err(Error::Quadrature(format!(
                "quadrature_n = {q} must equal the corrector grid resolution {n}"
            )));
        }
    }
    let op = HomogenizedOperator::from_table(table)?;
    let abar = homogenized_matrix(table)?;
    let quad = LatticeQuadrature::new(abar.clone(), n, m_top)?;

    let mut jobs = Vec::new();
    for &m in &cfg.m_list {
        let polys =
            study_polynomials(&op, m, cfg.seeds_per_degree, cfg.rng_seed, negative_control)?;
        for (s, q) in polys.into_iter().enumerate() {
            jobs.push((m, s, q));
        }
    }
    let psi_checks: Vec<PsiCheck> = jobs
        .iter()
        .map(|(m, s, q)| {
            let defect = a_harmonic_defect(&op, q)?;
            Ok(PsiCheck {
                m: *m,
                seed: *s,
                a_harmonic_defect: defect,
                pass: defect <= DEFECT_TOL,
            })
        })
        .collect::<Result<_>>()?;
    let psis: Vec<HeterogeneousPolynomial> = jobs
        .iter()
        .map(|(_, _, q)| HeterogeneousPolynomial::from_polynomial(q, table))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, f64)> = (0..jobs.len())
        .flat_map(|j| cfg.r_list.iter().map(move |&r| (j, r)))
        .collect();
    let results: Vec<Result<RatioMeasurement>> = cells
        .par_iter()
        .map(|&(j, r)| {
            three_ellipsoid_ratio(&quad, &psis[j].integrand(PsiPart::Full), r, cfg.theta)
        })
        .collect();

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (&(j, r), res) in cells.iter().zip(results) {
        match res {
            Ok(ratios) => rows.push(ScalingRow {
                m: jobs[j].0,
                seed: jobs[j].1,
                ratios,
            }),
            Err(e) => errors.push(format!(
                "m = {}, seed {}, r = {r}: {e}",
                jobs[j].0, jobs[j].1
            )),
        }
    }

    let mut r_fits = Vec::new();
    let mut flatness = Vec::new();
    let mut monotonicity = Vec::new();
    for &(m, s, _) in &jobs {
        let mine: Vec<&ScalingRow> = rows.iter().filter(|x| x.m == m && x.seed == s).collect();
        let usable: Vec<&&ScalingRow> = mine
            .iter()
            .filter(|x| excess(x) > x.ratios.quad_err)
            .collect();
        let lx: Vec<f64> = usable.iter().map(|x| x.ratios.r.ln()).collect();
        let ly: Vec<f64> = usable.iter().map(|x| excess(x).ln()).collect();
        let slope = fit_slope(&lx, &ly);
        r_fits.push(SlopeFit {
            m,
            seed: s,
            points: usable.len(),
            slope,
            at_floor: usable.is_empty(),
            // Nothing above the quadrature floor: the ratio has already decayed.
            pass: usable.is_empty()
                || slope.is_some_and(|v| v >= R_SLOPE_BAND.0 && v <= R_SLOPE_BAND.1),
        });

        let m4 = (m as f64).powi(4);
        let prof: Vec<f64> = mine
            .iter()
            .filter(|x| x.ratios.r >= m4)
            .map(|x| x.ratios.doubling_ratio)
            .collect();
        let variation = if prof.is_empty() {
            None
        } else {
            let lo = prof.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = prof.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Some((hi - lo) / lo)
        };
        flatness.push(Flatness {
            m,
            seed: s,
            points: prof.len(),
            variation,
            pass: variation.is_none_or(|v| v <= FLATNESS_TOL),
        });

        let inv = count_inversions(&mine.iter().map(|x| excess(x)).collect::<Vec<_>>());
        monotonicity.push(Monotonicity {
            m,
            seed: s,
            inversions: inv,
            pass: inv <= 1,
        });
    }

    let mut m_fits = Vec::new();
    let mut ms: Vec<u32> = cfg.m_list.clone();
    ms.sort();
    ms.dedup();
    if ms.len() >= 2 {
        for &r in &cfg.r_list {
            for s in 0..cfg.seeds_per_degree {
                let pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|x| x.seed == s && x.ratios.r == r && excess(x) > x.ratios.quad_err)
                    .map(|x| ((x.m as f64).ln(), excess(x).ln()))
                    .collect();
                let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                let slope = fit_slope(&lx, &ly);
                m_fits.push(DegreeFit {
                    r,
                    seed: s,
                    slope,
                    pass: slope.is_none_or(|v| v <= M_SLOPE_MAX),
                });
            }
        }
    }

    let flags = ScalingFlags {
        a_harmonic: psi_checks.iter().all(|c| c.pass),
        r_slope: r_fits.iter().all(|f| f.pass),
        m_slope: m_fits.iter().all(|f| f.pass),
        flatness: flatness.iter().all(|f| f.pass),
        monotone: monotonicity.iter().all(|f| f.pass),
    };
    let pass = errors.is_empty()
        && flags.a_harmonic
        && flags.r_slope
        && flags.m_slope
        && flags.flatness
        && flags.monotone;
    let min_three_ratio = rows
        .iter()
        .map(|x| x.ratios.three_ratio)
        .fold(f64::INFINITY, f64::min);
    Ok(ScalingReport {
        rng_seed: cfg.rng_seed,
        theta: cfg.theta,
        samples_per_unit: n,
        negative_control,
        abar: (0..abar.nrows())
            .map(|i| (0..abar.ncols()).map(|j| abar[(i, j)]).collect())
            .collect(),
        rows,
        psi_checks,
        r_fits,
        m_fits,
        flatness,
        monotonicity,
        flags,
        min_three_ratio,
        errors,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crossing {
    pub threshold: f64,
    /// Largest probed radius with `three_ratio − 1 > threshold`.
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeSeries {
    pub m: u32,
    pub seed: usize,
    pub radii: Vec<f64>,
    pub excess: Vec<f64>,
    pub crossings: Vec<Crossing>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub theta: f64,
    pub rng_seed: u64,
    pub series: Vec<ProbeSeries>,
}

/// Radii from `4m⁴` down to `m`, `steps_per_octave` per factor of two.
pub fn probe_radii(m: u32, steps_per_octave: usize) -> Vec<f64> {
    let top = 4.0 * (m as f64).powi(4);
    let bottom = m.max(1) as f64;
    let f = 2f64.powf(-1.0 / steps_per_octave as f64);
    let mut out = Vec::new();
    let mut r = top;
    while r >= bottom * (1.0 - 1e-12) {
        out.push(r);
        r *= f;
    }
    out
}

/// Sweeps `r` downward for each `m` and records where `three_ratio − 1`
/// first exceeds each threshold. Measurement only; nothing is asserted.
pub fn minimal_scale_probe(
    table: &CorrectorTable,
    m_list: &[u32],
    seeds: usize,
    theta: f64,
    rng_seed: u64,
    steps_per_octave: usize,
) -> Result<ProbeReport> {
    let m_top = *m_list
        .iter()
        .max()
        .ok_or_else(|| Error::Contract("empty m_list".into()))?;
    if (m_top as usize) > table.m_max() {
        return Err(Error::TableTooShort {
            have: table.m_max(),
            need: m_top as usize,
        });
    }
    let op = HomogenizedOperator::from_table(table)?;
    let quad = LatticeQuadrature::new(homogenized_matrix(table)?, table.n(), m_top)?;
    let mut series = Vec::new();
    for &m in m_list {
        let polys = study_polynomials(&op, m, seeds, rng_seed, false)?;
        for (s, q) in polys.iter().enumerate() {
            let psi = HeterogeneousPolynomial::from_polynomial(q, table)?;
            let radii = probe_radii(m, steps_per_octave);
            let excess: Vec<f64> = radii
                .par_iter()
                .map(|&r| {
                    Ok(
                        three_ellipsoid_ratio(&quad, &psi.integrand(PsiPart::Full), r, theta)?
                            .three_ratio
                            - 1.0,
                    )
                })
                .collect::<Result<_>>()?;
            let crossings = PROBE_THRESHOLDS
                .iter()
                .map(|&t| Crossing {
                    threshold: t,
                    scale: radii
                        .iter()
                        .zip(&excess)
                        .find(|(_, e)| **e > t)
                        .map(|(r, _)| *r),
                })
                .collect();
            series.push(ProbeSeries {
                m,
                seed: s,
                radii,
                excess,
                crossings,
            });
        }
    }
    Ok(ProbeReport {
        theta,
        rng_seed,
        series,
    })
}
