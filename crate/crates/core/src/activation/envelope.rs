use super::kind::ActivationKind;
use crate::error::{Error, Result};

/// Pointwise lower and upper response curves over a set of parameterizations.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub x: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Min and max of `kind` over every parameter set in `param_sets`, at each
/// grid point.
pub fn response_envelope(
    kind: ActivationKind,
    param_sets: &[Vec<f64>],
    x_grid: &[f64],
) -> Result<Envelope> {
    if param_sets.is_empty() {
        return Err(Error::Contract(
            "response envelope needs at least one site".into(),
        ));
    }
    if let Some(bad) = param_sets.iter().find(|p| p.len() != kind.num_params()) {
        return Err(Error::Contract(format!(
            "`{kind}` takes {} parameters, a site has {}",
            kind.num_params(),
            bad.len()
        )));
    }
    if x_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract("x grid must be sorted".into()));
    }
    let (min, max) = x_grid
        .iter()
        .map(|&x| {
            param_sets
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let y = kind.eval(x, p);
                    (lo.min(y), hi.max(y))
                })
        })
        .unzip();
    Ok(Envelope {
        x: x_grid.to_vec(),
        min,
        max,
    })
}

/// Evenly spaced grid over `[lo, hi]` with `n` points.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_collapses() {
        let grid = linspace(-2.0, 2.0, 41);
        let p = vec![0.2, 1.4, -0.1];
        let env = response_envelope(ActivationKind::DualLine, &[p.clone()], &grid).unwrap();
        assert_eq!(env.min, env.max);
        for (x, y) in grid.iter().zip(&env.min) {
            assert_eq!(*y, ActivationKind::DualLine.eval(*x, &p));
        }
    }

    #[test]
    fn two_dp_relu_sites() {
        let env = response_envelope(
            ActivationKind::DpRelu,
            &[vec![0.01, 0.5], vec![0.01, 2.0]],
            &[1.0],
        )
        .unwrap();
        assert_eq!((env.min[0], env.max[0]), (0.5, 2.0));
    }

    #[test]
    fn empty_sites_rejected() {
        assert!(response_envelope(ActivationKind::DpRelu, &[], &[0.0]).is_err());
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(response_envelope(ActivationKind::DpRelu, &[vec![0.0, 1.0]], &[1.0, 0.0]).is_err());
    }
}
