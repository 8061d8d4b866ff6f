use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use stable_ssm::matfound::{is_mean_square_stable, lyapunov_residual, max_eig_sym, SpdMatrix};
use stable_ssm::param::{assemble_brl_matrix, BrlParams, Ssm};

use crate::error::CliResult;

/// Largest accepted `‖AᵀP + PA + FᵀPF + Q‖_F / ‖Q‖_F`.
pub const LYAPUNOV_TOL: f64 = 1e-9;

/// Outcome of the stability and gain checks on one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// Spectral abscissa of the second-moment operator.
    pub ms_abscissa: f64,
    pub ms_stable: bool,
    /// `λ_max(AᵀP + PA + FᵀPF)`, negative for a valid certificate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_max_eig: Option<f64>,
    /// Relative residual against the generating `Q`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// `λ_max(M)` of the bounded-real matrix at `gamma`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brl_max_eig: Option<f64>,
    pub passed: bool,
}

/// Runs every check the supplied data allow: mean-square stability always,
/// the Lyapunov certificate when `p` is given (and the residual when `q` is),
/// and the bounded-real matrix when both `p` and `gamma` are.
pub fn certify(s: &Ssm, p: Option<&SpdMatrix>, q: Option<&DMatrix<f64>>, gamma: Option<f64>) -> CliResult<CertificateReport> {
    let ms = is_mean_square_stable(&s.a, &s.f)?;
    let mut passed = ms.stable;
    let mut r = CertificateReport {
        ms_abscissa: ms.abscissa,
        ms_stable: ms.stable,
        lyapunov_max_eig: None,
        lyapunov_residual: None,
        gamma: None,
        brl_max_eig: None,
        passed: false,
    };
    if let Some(p) = p {
        let zero = DMatrix::zeros(s.a.nrows(), s.a.nrows());
        let lyap = lyapunov_residual(&s.a, &s.f, p.matrix(), &zero);
        let top = max_eig_sym(&lyap)?;
        passed &= top < 0.0;
        r.lyapunov_max_eig = Some(top);
        if let Some(q) = q {
            let res = (lyap + q).norm() / q.norm();
            passed &= res <= LYAPUNOV_TOL;
            r.lyapunov_residual = Some(res);
        }
        if let Some(g) = gamma {
            let m = max_eig_sym(&assemble_brl_matrix(s, p, g))?;
            passed &= m < 0.0;
            r.gamma = Some(g);
            r.brl_max_eig = Some(m);
        }
    }
    r.passed = passed;
    Ok(r)
}

/// Right-hand side of the Lyapunov equation met by a bounded-real model: `Q + CᵀC`.
pub fn brl_lyapunov_q(params: &BrlParams) -> CliResult<DMatrix<f64>> {
    Ok(params.q()?.into_matrix() + params.c.transpose() * &params.c)
}

/// [`certify`] with the certificate, `Q` and `γ` carried by the generating parameters.
pub fn certify_brl(s: &Ssm, p: &SpdMatrix, params: &BrlParams) -> CliResult<CertificateReport> {
    certify(s, Some(p), Some(&brl_lyapunov_q(params)?), Some(params.gamma))
}
