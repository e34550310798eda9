//! Active and inactive macro points driven by the accumulated distance d_E.

use crate::error::{Error, Result};

/// `exp(-Lambda dt) d_prev + dt (du + dphi)`.
pub fn distance_update(d_prev: f64, du: f64, dphi: f64, dt: f64, big_lambda: f64) -> f64 {
    (-big_lambda * dt).exp() * d_prev + dt * (du + dphi)
}

/// Symmetric pairwise matrix with a zero diagonal, stored as the strict
/// upper triangle.
#[derive(Clone, Debug)]
pub struct PairMatrix {
    n: usize,
    data: Vec<f64>,
}

impl PairMatrix {
    pub fn zeros(n: usize) -> PairMatrix {
        PairMatrix {
            n,
            data: vec![0.0; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // rows 0..i hold n-1, n-2, ... entries
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }
}

/// Data of one time level used to advance d_E.
pub struct Snapshot<'a> {
    /// Cellwise concentration.
    pub u: &'a [f64],
    /// Point whose micro fields are stored at each point (itself when
    /// active, its association target when copied).
    pub source: &'a [usize],
    /// Coarse-mesh cellwise phase-field means per point, indexed by source.
    pub means: &'a dyn Fn(usize) -> &'a [f64],
    /// Coarse element areas.
    pub areas: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct ActiveSet {
    pub active: Vec<bool>,
    /// Association target for every point (itself when active).
    pub assoc: Vec<usize>,
    pub d: PairMatrix,
    pub tol_r: f64,
    pub tol_c: f64,
}

impl ActiveSet {
    /// Initial state: every point inactive.
    pub fn new(n: usize) -> ActiveSet {
        ActiveSet {
            active: vec![false; n],
            assoc: (0..n).collect(),
            d: PairMatrix::zeros(n),
            tol_r: 0.0,
            tol_c: 0.0,
        }
    }

    /// Every point active.
    pub fn all(n: usize) -> ActiveSet {
        ActiveSet {
            active: vec![true; n],
            ..ActiveSet::new(n)
        }
    }

    /// A fixed active set with a prescribed association.
    pub fn fixed(active: Vec<bool>, assoc: Vec<usize>) -> Result<ActiveSet> {
        let n = active.len();
        let mut s = ActiveSet::new(n);
        if assoc.len() != n || assoc.iter().enumerate().any(|(i, &a)| a >= n || !active[a] || (active[i] && a != i)) {
            return Err(Error::Config(vec!["fixed active set: association must map into the active points".into()]));
        }
        s.active = active;
        s.assoc = assoc;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_ids(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    /// Advances every pairwise distance by one step with the data of the
    /// last committed time level. Pairs of points sharing the same stored
    /// fields are compared once.
    pub fn accumulate(&mut self, snap: &Snapshot, dt: f64, big_lambda: f64) {
        let n = self.len();
        let decay = (-big_lambda * dt).exp();
        let mut sources: Vec<usize> = snap.source.to_vec();
        sources.sort_unstable();
        sources.dedup();
        let mut slot = vec![usize::MAX; n];
        for (k, &s) in sources.iter().enumerate() {
            slot[s] = k;
        }
        let ns = sources.len();
        let mut dphi = vec![0.0; ns * ns];
        for a in 0..ns {
            let ma = (snap.means)(sources[a]);
            for b in a + 1..ns {
                let mb = (snap.means)(sources[b]);
                let v: f64 = ma.iter().zip(mb).zip(snap.areas).map(|((x, y), w)| (x - y).abs() * w).sum();
                dphi[a * ns + b] = v;
                dphi[b * ns + a] = v;
            }
        }
        let mut k = 0;
        for i in 0..n {
            let si = slot[snap.source[i]];
            for j in i + 1..n {
                let sj = slot[snap.source[j]];
                let du = (snap.u[i] - snap.u[j]).abs();
                self.d.data[k] = decay * self.d.data[k] + dt * (du + dphi[si * ns + sj]);
                k += 1;
            }
        }
    }

    /// Deactivation in increasing point order, then activation and association.
    pub fn update(&mut self, c_r: f64, c_c: f64) {
        let n = self.len();
        self.tol_r = c_r * self.d.max();
        self.tol_c = c_c * self.tol_r;
        for a in 0..n {
            if !self.active[a] {
                continue;
            }
            let close = (0..n).any(|b| b != a && self.active[b] && self.d.get(a, b) < self.tol_c);
            if close {
                self.active[a] = false;
            }
        }
        // activation is judged against the set left after deactivation;
        // when that set is empty every point activates
        let kept = self.active_ids();
        for i in 0..n {
            if self.active[i] {
                continue;
            }
            let nearest = kept.iter().map(|&b| self.d.get(i, b)).fold(f64::INFINITY, f64::min);
            if nearest > self.tol_r {
                self.active[i] = true;
            }
        }
        self.associate();
    }

    fn associate(&mut self) {
        let act = self.active_ids();
        for i in 0..self.len() {
            self.assoc[i] = if self.active[i] {
                i
            } else {
                let mut best = act[0];
                for &b in &act[1..] {
                    if self.d.get(i, b) < self.d.get(i, best) {
                        best = b;
                    }
                }
                best
            };
        }
    }
}
