//! Reaction kinetics, the phase-field nonlinearity and its monotone split.

/// Non-dimensional chemistry and interface parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChemistryParams {
    /// Solute diffusivity.
    pub d: f64,
    /// Mineral concentration.
    pub u_star: f64,
    /// Equilibrium concentration.
    pub u_eq: f64,
    /// Reaction constant.
    pub k: f64,
    /// Interface diffusivity.
    pub gamma: f64,
    /// Diffuse-interface width.
    pub lambda: f64,
    /// Regularization of the phase field in the cell problems.
    pub delta: f64,
}

impl Default for ChemistryParams {
    fn default() -> Self {
        Self {
            d: 1.0,
            u_star: 1.0,
            u_eq: 0.5,
            k: 1.0,
            gamma: 0.01,
            lambda: 0.08,
            delta: 1e-4,
        }
    }
}

impl ChemistryParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("D", self.d),
            ("u_star", self.u_star),
            ("u_eq", self.u_eq),
            ("k", self.k),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("delta", self.delta),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} must be positive and finite (got {x})"));
            }
        }
        if self.u_eq >= self.u_star {
            v.push(format!("u_eq ({}) must be below u_star ({})", self.u_eq, self.u_star));
        }
        if self.lambda >= 1.0 {
            v.push(format!("lambda ({}) must be below 1", self.lambda));
        }
        if self.delta >= 0.1 {
            v.push(format!("delta ({}) must be small", self.delta));
        }
        v
    }
}

/// P'(phi) for the double well P = 8 phi^2 (1 - phi)^2.
pub fn double_well_prime(phi: f64) -> f64 {
    16.0 * phi * (1.0 - phi) * (1.0 - 2.0 * phi)
}

/// f(u) = k ([u]_+^2 / u_eq^2 - 1).
pub fn reaction_rate(u: f64, p: &ChemistryParams) -> f64 {
    let up = u.max(0.0);
    p.k * (up * up / (p.u_eq * p.u_eq) - 1.0)
}

/// F(phi, u) = -gamma P'(phi) - 4 lambda phi (1 - phi) f(u) / u*.
pub fn nonlinearity(phi: f64, u: f64, p: &ChemistryParams) -> f64 {
    -p.gamma * double_well_prime(phi)
        - 4.0 * p.lambda * phi * (1.0 - phi) * reaction_rate(u, p) / p.u_star
}

/// Coefficients (a, b, c) of dF/dphi = a z^2 + b z + c.
fn dfdphi_coeffs(u: f64, p: &ChemistryParams) -> (f64, f64, f64) {
    let r = reaction_rate(u, p) / p.u_star;
    let g = p.gamma;
    let l = p.lambda;
    (-96.0 * g, 96.0 * g + 8.0 * l * r, -16.0 * g - 4.0 * l * r)
}

pub fn dfdphi(z: f64, u: f64, p: &ChemistryParams) -> f64 {
    let (a, b, c) = dfdphi_coeffs(u, p);
    (a * z + b) * z + c
}

/// Real roots of a z^2 + b z + c, ascending.
fn roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    let q = -0.5 * (b + b.signum() * s);
    let (mut r1, mut r2) = (q / a, c / q);
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    vec![r1, r2]
}

/// (F_+, F_-): the integrals from 0 to `phi` of the positive and negative
/// parts of dF/dphi. F_+ is nondecreasing, F_- nonincreasing, F_+ + F_- = F.
pub fn f_split(phi: f64, u: f64, p: &ChemistryParams) -> (f64, f64) {
    let (a, b, c) = dfdphi_coeffs(u, p);
    let g = |z: f64| ((a / 3.0 * z + b / 2.0) * z + c) * z;
    let (lo, hi) = if phi >= 0.0 { (0.0, phi) } else { (phi, 0.0) };
    let mut knots = vec![lo];
    knots.extend(roots(a, b, c).into_iter().filter(|&r| r > lo && r < hi));
    knots.push(hi);
    let (mut pos, mut neg) = (0.0, 0.0);
    for w in knots.windows(2) {
        let part = g(w[1]) - g(w[0]);
        let m = 0.5 * (w[0] + w[1]);
        if (a * m + b) * m + c >= 0.0 {
            pos += part;
        } else {
            neg += part;
        }
    }
    if phi >= 0.0 {
        (pos, neg)
    } else {
        (-pos, -neg)
    }
}

/// Dynamic linearization parameter max(|2 lambda f + 8 gamma|, |2 lambda f - 8 gamma|).
pub fn lipschitz_bound_f1(u: f64, p: &ChemistryParams) -> f64 {
    let f = reaction_rate(u, p);
    let l = p.lambda;
    (2.0 * l * f + 8.0 * p.gamma)
        .abs()
        .max((2.0 * l * f - 8.0 * p.gamma).abs())
}

/// sup over phi in [0,1] of |dF/dphi(phi, u)|.
pub fn sup_dfdphi(u: f64, p: &ChemistryParams) -> f64 {
    let (a, b, _) = dfdphi_coeffs(u, p);
    let mut cands = vec![0.0, 1.0];
    let v = -b / (2.0 * a);
    if (0.0..=1.0).contains(&v) {
        cands.push(v);
    }
    cands
        .into_iter()
        .map(|z| dfdphi(z, u, p).abs())
        .fold(0.0, f64::max)
}

/// sup over phi in [0,1] of |dF_-/dphi|, i.e. of the negative part of dF/dphi.
pub fn sup_dfminus(u: f64, p: &ChemistryParams) -> f64 {
    let (a, b, _) = dfdphi_coeffs(u, p);
    let mut cands = vec![0.0, 1.0];
    let v = -b / (2.0 * a);
    if (0.0..=1.0).contains(&v) {
        cands.push(v);
    }
    cands
        .into_iter()
        .map(|z| (-dfdphi(z, u, p)).max(0.0))
        .fold(0.0, f64::max)
}

/// Lipschitz constants of F in phi and in u over [0,1] x [0, u_max].
pub fn lipschitz_constants(p: &ChemistryParams, u_max: f64) -> (f64, f64) {
    // dF/dphi is affine in f(u), and f is monotone on [0, u_max]
    let m1 = sup_dfdphi(0.0, p).max(sup_dfdphi(u_max, p));
    // |dF/du| = 4 lambda phi (1 - phi) |f'(u)| / u*, maximal at phi = 1/2, u = u_max
    let fprime = 2.0 * p.k * u_max.max(0.0) / (p.u_eq * p.u_eq);
    let m2 = p.lambda * fprime / p.u_star;
    (m1, m2)
}

/// Largest time step covered by the micro convergence theorem at concentration `u`.
pub fn micro_dt_bound(u: f64, l_coup: f64, p: &ChemistryParams) -> f64 {
    let m = sup_dfdphi(u, p);
    if m == 0.0 {
        f64::INFINITY
    } else {
        p.lambda * p.lambda * (1.0 + l_coup) / m
    }
}
