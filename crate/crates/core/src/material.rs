//! Modified Neo-Hookean and linear plane-stress constitutive laws for a unit
//! elastic modulus. Voigt ordering is `[11, 22, 12]` with engineering shear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];
pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstitutiveForm {
    /// Stress and tangent derived from the stored energy, mutually consistent.
    #[default]
    Consistent,
    /// Coefficients exactly as commonly printed for this model. The tangent
    /// is not the derivative of the stress; kept for comparison runs only.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub nu: f64,
    pub lambda0: f64,
    pub mu0: f64,
    pub form: ConstitutiveForm,
}

impl MaterialParams {
    pub fn new(nu: f64) -> Self {
        let (lambda0, mu0) = lame_parameters(nu);
        MaterialParams {
            nu,
            lambda0,
            mu0,
            form: ConstitutiveForm::Consistent,
        }
    }

    pub fn with_form(mut self, form: ConstitutiveForm) -> Self {
        self.form = form;
        self
    }

    /// Linear plane-stress matrix for unit modulus.
    pub fn hooke(&self) -> Mat3 {
        hooke_matrix(self.nu)
    }
}

/// Plane-stress Lamé parameters for a unit elastic modulus.
pub fn lame_parameters(nu: f64) -> (f64, f64) {
    let mu = 1.0 / (2.0 * (1.0 + nu));
    let lambda_3d = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let lambda = 2.0 * lambda_3d * mu / (lambda_3d + 2.0 * mu);
    (lambda, mu)
}

pub fn hooke_matrix(nu: f64) -> Mat3 {
    let c = 1.0 / (1.0 - nu * nu);
    [
        [c, c * nu, 0.0],
        [c * nu, c, 0.0],
        [0.0, 0.0, c * (1.0 - nu) / 2.0],
    ]
}

/// Kinematic quantities of a 2D deformation gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationState {
    pub f: Mat2,
    pub c: Mat2,
    pub j: f64,
}

impl DeformationState {
    pub fn new(f: Mat2) -> Self {
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                c[i][k] = f[0][i] * f[0][k] + f[1][i] * f[1][k];
            }
        }
        DeformationState {
            f,
            c,
            j: f[0][0] * f[1][1] - f[0][1] * f[1][0],
        }
    }

    fn c_inv(&self) -> Mat2 {
        let det = self.c[0][0] * self.c[1][1] - self.c[0][1] * self.c[1][0];
        [
            [self.c[1][1] / det, -self.c[0][1] / det],
            [-self.c[1][0] / det, self.c[0][0] / det],
        ]
    }

    fn check(&self, element: usize) -> Result<()> {
        if self.j > 0.0 && self.j.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositiveJacobian {
                element,
                jacobian: self.j,
            })
        }
    }
}

/// Stored energy per unit modulus and reference volume.
pub fn strain_energy(state: &DeformationState, params: &MaterialParams) -> Result<f64> {
    state.check(usize::MAX)?;
    let tr = state.c[0][0] + state.c[1][1];
    Ok(0.5 * params.mu0 * (tr - 2.0) - params.mu0 * state.j.ln()
        + 0.5 * params.lambda0 * (state.j - 1.0).powi(2))
}

/// Second Piola-Kirchhoff stress per unit modulus.
pub fn pk2_stress(state: &DeformationState, params: &MaterialParams) -> Result<Mat2> {
    state.check(usize::MAX)?;
    Ok(pk2_unchecked(state, params))
}

fn pk2_unchecked(state: &DeformationState, params: &MaterialParams) -> Mat2 {
    let ci = state.c_inv();
    let j = state.j;
    let vol = match params.form {
        ConstitutiveForm::Consistent => params.lambda0 * (j * j - j),
        ConstitutiveForm::Printed => params.lambda0 * (2.0 * j * j - j),
    };
    let mut s = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let id = if a == b { 1.0 } else { 0.0 };
            s[a][b] = vol * ci[a][b] + params.mu0 * (id - ci[a][b]);
        }
    }
    s
}

/// Material tangent `2 dS/dC` per unit modulus, in Voigt form.
pub fn tangent_moduli(state: &DeformationState, params: &MaterialParams) -> Result<Mat3> {
    state.check(usize::MAX)?;
    Ok(tangent_unchecked(state, params))
}

fn tangent_unchecked(state: &DeformationState, params: &MaterialParams) -> Mat3 {
    let ci = state.c_inv();
    let j = state.j;
    let a = params.lambda0 * (2.0 * j * j - j);
    let b = match params.form {
        ConstitutiveForm::Consistent => params.mu0 - params.lambda0 * (j * j - j),
        ConstitutiveForm::Printed => params.mu0 - a,
    };
    let idx = [(0, 0), (1, 1), (0, 1)];
    let mut d = [[0.0; 3]; 3];
    for (p, &(i, jj)) in idx.iter().enumerate() {
        for (q, &(k, l)) in idx.iter().enumerate() {
            d[p][q] = a * ci[i][jj] * ci[k][l] + b * (ci[i][k] * ci[jj][l] + ci[i][l] * ci[jj][k]);
        }
    }
    d
}

/// Stress and tangent together, reporting `element` on inversion.
pub fn evaluate(f: Mat2, params: &MaterialParams, element: usize) -> Result<(DeformationState, Mat2, Mat3)> {
    let state = DeformationState::new(f);
    state.check(element)?;
    Ok((state, pk2_unchecked(&state, params), tangent_unchecked(&state, params)))
}
