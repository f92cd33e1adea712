use super::params::{GradMap, ParamSet};
use super::DiffnumError;

/// Result of a gradient check; `max_rel_err` is the worst component.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compare backprop gradients against central finite differences.
///
/// `loss` must return the scalar loss and the analytic gradients for the
/// given parameters; it is re-evaluated at perturbed parameters, two evals
/// per scalar component. The relative error per component is
/// `|analytic - numeric| / max(|analytic|, 1e-12)` and the maximum over all
/// components is returned.
pub fn finite_difference_check<F>(
    ps: &mut ParamSet,
    step: f64,
    mut loss: F,
) -> Result<GradCheck, DiffnumError>
where
    F: FnMut(&ParamSet) -> Result<(f64, GradMap), DiffnumError>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, analytic) = loss(ps)?;
    let names: Vec<String> = ps.iter().map(|(n, _)| n.to_string()).collect();
    let mut check = GradCheck {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for name in names {
        let len = ps.get(&name)?.len();
        for idx in 0..len {
            let orig = ps.get(&name)?.data()[idx];
            ps.get_mut(&name)?.data_mut()[idx] = orig + step;
            let (lp, _) = loss(ps)?;
            ps.get_mut(&name)?.data_mut()[idx] = orig - step;
            let (lm, _) = loss(ps)?;
            ps.get_mut(&name)?.data_mut()[idx] = orig;
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic.get(&name).map_or(0.0, |t| t.data()[idx]);
            let rel = (a - numeric).abs() / a.abs().max(1e-12);
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst_param = format!("{name}[{idx}]");
                check.worst_analytic = a;
                check.worst_numeric = numeric;
            }
        }
    }
    Ok(check)
}
