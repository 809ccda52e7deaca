//! Local-density exchange-correlation: Slater exchange plus the
//! Vosko-Wilk-Nusair paramagnetic correlation fit, with analytic potentials
//! V = d(rho * eps)/drho.

use crate::{Error, Result};
use std::f64::consts::PI;

/// Densities below this are treated as vacuum to keep r_s finite.
const RHO_VACUUM: f64 = 1e-30;

/// VWN correlation fit coefficients.
///
/// The canonical paramagnetic value of `c` is 12.9352; some published tables
/// print 12.8352 instead, which can be selected via [`VwnParams::with_c`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VwnParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub x0: f64,
}

impl Default for VwnParams {
    fn default() -> Self {
        VwnParams {
            a: 0.0621814,
            b: 3.72744,
            c: 12.9352,
            x0: -0.10498,
        }
    }
}

impl VwnParams {
    pub fn with_c(c: f64) -> Self {
        VwnParams {
            c,
            ..VwnParams::default()
        }
    }
}

/// Exchange and correlation energy densities (per electron) and potentials
/// at one density value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XcEval {
    pub eps_x: f64,
    pub eps_c: f64,
    pub v_x: f64,
    pub v_c: f64,
}

impl XcEval {
    pub fn eps_xc(&self) -> f64 {
        self.eps_x + self.eps_c
    }

    pub fn v_xc(&self) -> f64 {
        self.v_x + self.v_c
    }
}

fn check_density(rho: f64) -> Result<()> {
    if rho < 0.0 || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "density must be nonnegative, got {rho}"
        )));
    }
    Ok(())
}

/// Slater exchange: eps_x = -(3/4pi) (3 pi^2 rho)^(1/3), v_x = (4/3) eps_x.
pub fn slater_exchange(rho: f64) -> Result<(f64, f64)> {
    check_density(rho)?;
    if rho < RHO_VACUUM {
        return Ok((0.0, 0.0));
    }
    let eps_x = -(3.0 / (4.0 * PI)) * (3.0 * PI * PI * rho).cbrt();
    Ok((eps_x, 4.0 / 3.0 * eps_x))
}

/// VWN correlation energy density and potential with the default fit.
pub fn vwn_correlation(rho: f64) -> Result<(f64, f64)> {
    vwn_correlation_with(&VwnParams::default(), rho)
}

/// VWN correlation energy density and potential.
///
/// eps_c(x) with x = sqrt(r_s); the potential follows from the chain rule
/// through r_s: v_c = eps_c - (x/6) d(eps_c)/dx.
pub fn vwn_correlation_with(params: &VwnParams, rho: f64) -> Result<(f64, f64)> {
    check_density(rho)?;
    if rho < RHO_VACUUM {
        return Ok((0.0, 0.0));
    }
    let VwnParams { a, b, c, x0 } = *params;
    let rs = (3.0 / (4.0 * PI * rho)).cbrt();
    let x = rs.sqrt();
    let q = (4.0 * c - b * b).sqrt();
    let y = |t: f64| t * t + b * t + c;
    let y_x = y(x);
    let y_x0 = y(x0);
    let atan_term = (q / (2.0 * x + b)).atan();
    let root_weight = b * x0 / y_x0;

    let eps_c = 0.5
        * a
        * ((x * x / y_x).ln() + (2.0 * b / q) * atan_term
            - root_weight * (((x - x0) * (x - x0) / y_x).ln() + (2.0 * (b + 2.0 * x0) / q) * atan_term));

    // d(eps_c)/dx
    let datan = -2.0 / ((2.0 * x + b).powi(2) + q * q); // d/dx of atan term, over q
    let dy = 2.0 * x + b;
    let deps_dx = 0.5
        * a
        * (2.0 / x - dy / y_x + 2.0 * b * datan
            - root_weight * (2.0 / (x - x0) - dy / y_x + 2.0 * (b + 2.0 * x0) * datan));

    let v_c = eps_c - x / 6.0 * deps_dx;
    Ok((eps_c, v_c))
}

/// Combined Slater + VWN evaluation with the default fit.
pub fn xc_combine(rho: f64) -> Result<XcEval> {
    xc_combine_with(&VwnParams::default(), rho)
}

pub fn xc_combine_with(params: &VwnParams, rho: f64) -> Result<XcEval> {
    let (eps_x, v_x) = slater_exchange(rho)?;
    let (eps_c, v_c) = vwn_correlation_with(params, rho)?;
    Ok(XcEval {
        eps_x,
        eps_c,
        v_x,
        v_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_maps_to_zero() {
        assert_eq!(slater_exchange(0.0).unwrap(), (0.0, 0.0));
        assert_eq!(vwn_correlation(0.0).unwrap(), (0.0, 0.0));
        let eval = xc_combine(0.0).unwrap();
        assert_eq!(eval.eps_xc(), 0.0);
        assert_eq!(eval.v_xc(), 0.0);
    }

    #[test]
    fn negative_density_rejected() {
        assert!(slater_exchange(-1.0).is_err());
        assert!(vwn_correlation(-1e-9).is_err());
        assert!(xc_combine(-0.5).is_err());
    }

    #[test]
    fn slater_exchange_at_forced_unit_fermi_momentum() {
        // rho = 1/(3 pi^2) makes (3 pi^2 rho)^(1/3) = 1 exactly
        let rho = 1.0 / (3.0 * PI * PI);
        let (eps_x, v_x) = slater_exchange(rho).unwrap();
        assert_abs_diff_eq!(eps_x, -3.0 / (4.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(eps_x, -0.238732414637843, epsilon = 1e-14);
        assert_abs_diff_eq!(v_x, 4.0 / 3.0 * eps_x, epsilon = 1e-15);
    }

    /// Values pinned from an independent 50-digit evaluation of the same
    /// closed forms.
    #[test]
    fn vwn_pinned_reference_values() {
        let cases = [
            (1.0, -0.0715926123067907, -0.0799383831759856),
            (1e-6, -0.0047766175044473, -0.0060999077256952),
            (1e-2, -0.0376451902621714, -0.0438726564473937),
            (1e3, -0.1353041209592258, -0.1451354718634849),
        ];
        for (rho, eps_ref, v_ref) in cases {
            let (eps_c, v_c) = vwn_correlation(rho).unwrap();
            assert_abs_diff_eq!(eps_c, eps_ref, epsilon = 1e-13);
            assert_abs_diff_eq!(v_c, v_ref, epsilon = 1e-12);
        }
        // alternative printed fit constant
        let params = VwnParams::with_c(12.8352);
        let (eps_c, v_c) = vwn_correlation_with(&params, 1.0).unwrap();
        assert_abs_diff_eq!(eps_c, -0.0713384144248689, epsilon = 1e-13);
        assert_abs_diff_eq!(v_c, -0.0796718751826943, epsilon = 1e-12);
    }

    /// Analytic potentials against centered finite differences of rho * eps.
    #[test]
    fn potentials_match_finite_differences() {
        for i in 0..100 {
            // log grid over [1e-10, 1e8]
            let rho = 10f64.powf(-10.0 + 18.0 * i as f64 / 99.0);
            let h = 1e-6 * rho;
            let fd = |f: &dyn Fn(f64) -> f64| (f(rho + h) - f(rho - h)) / (2.0 * h);

            let (_, v_x) = slater_exchange(rho).unwrap();
            let fd_x = fd(&|r| r * slater_exchange(r).unwrap().0);
            assert!(
                (v_x - fd_x).abs() <= 1e-6 * v_x.abs().max(1e-10),
                "rho={rho}: v_x {v_x} vs fd {fd_x}"
            );

            let (_, v_c) = vwn_correlation(rho).unwrap();
            let fd_c = fd(&|r| r * vwn_correlation(r).unwrap().0);
            assert!(
                (v_c - fd_c).abs() <= 1e-6 * v_c.abs().max(1e-10),
                "rho={rho}: v_c {v_c} vs fd {fd_c}"
            );
        }
    }

    #[test]
    fn combined_is_componentwise_sum_and_negative() {
        for i in 0..60 {
            let rho = 10f64.powf(-8.0 + 14.0 * i as f64 / 59.0);
            let eval = xc_combine(rho).unwrap();
            let (eps_x, v_x) = slater_exchange(rho).unwrap();
            let (eps_c, v_c) = vwn_correlation(rho).unwrap();
            assert_eq!(eval.eps_xc(), eps_x + eps_c);
            assert_eq!(eval.v_xc(), v_x + v_c);
            assert!(eval.eps_x <= 0.0 && eval.v_x <= 0.0);
            assert!(eval.eps_c <= 0.0);
            assert!(eval.v_xc() < 0.0, "v_xc must stay negative at rho={rho}");
        }
    }

    #[test]
    fn exchange_strictly_decreasing_in_density() {
        let mut prev = 0.0;
        for i in 0..80 {
            let rho = 10f64.powf(-10.0 + 18.0 * i as f64 / 79.0);
            let (eps_x, _) = slater_exchange(rho).unwrap();
            assert!(eps_x < prev, "eps_x not decreasing at rho={rho}");
            prev = eps_x;
        }
    }

    /// |eps_c| grows like |ln r_s| at high density: the exact ratio over six
    /// decades matches the small-x limit of the closed form within 1%.
    #[test]
    fn correlation_high_density_log_growth() {
        let params = VwnParams::default();
        let base = 1e4;
        let (e1, _) = vwn_correlation(base).unwrap();
        let (e2, _) = vwn_correlation(base * 1e6).unwrap();

        // small-x limit: Y(x) -> c, atan(q/(2x+b)) -> atan(q/b), (x-x0)^2 -> x0^2
        let asym = |rho: f64| {
            let VwnParams { a, b, c, x0 } = params;
            let rs = (3.0 / (4.0 * PI * rho)).cbrt();
            let x = rs.sqrt();
            let q = (4.0 * c - b * b).sqrt();
            let b0 = (q / b).atan();
            0.5 * a
                * ((x * x / c).ln() + (2.0 * b / q) * b0
                    - (b * x0 / (x0 * x0 + b * x0 + c))
                        * ((x0 * x0 / c).ln() + (2.0 * (b + 2.0 * x0) / q) * b0))
        };
        let predicted = asym(base * 1e6) / asym(base);
        let actual = e2 / e1;
        assert!(
            (actual / predicted - 1.0).abs() < 0.01,
            "ratio {actual} vs asymptotic {predicted}"
        );
    }
}
