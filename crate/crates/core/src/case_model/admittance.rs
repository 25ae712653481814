use nalgebra::DMatrix;
use num_complex::Complex64;

use super::NetworkModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchEnd {
    From,
    To,
}

/// Two-port admittances of one in-service branch (MATPOWER pi model).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchAdmittance {
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Active power leaving bus `at` into a branch terminal:
/// `v_at^2 g_self + v_at v_other (g_mut cos(th_at - th_other) + b_mut sin(th_at - th_other))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalFlow {
    pub at: usize,
    pub other: usize,
    pub g_self: f64,
    pub g_mut: f64,
    pub b_mut: f64,
}

impl BranchAdmittance {
    pub fn terminal(&self, end: BranchEnd) -> TerminalFlow {
        match end {
            BranchEnd::From => TerminalFlow {
                at: self.from,
                other: self.to,
                g_self: self.yff.re,
                g_mut: self.yft.re,
                b_mut: self.yft.im,
            },
            BranchEnd::To => TerminalFlow {
                at: self.to,
                other: self.from,
                g_self: self.ytt.re,
                g_mut: self.ytf.re,
                b_mut: self.ytf.im,
            },
        }
    }
}

/// Bus admittance matrix `Y = G + jB` in compressed-row form. Every row
/// stores its diagonal plus one entry per adjacent bus.
#[derive(Clone, Debug)]
pub struct Admittance {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    g: Vec<f64>,
    b: Vec<f64>,
    /// Indexed like `NetworkModel::branches`; `None` for out-of-service branches.
    branches: Vec<Option<BranchAdmittance>>,
}

impl Admittance {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    /// Nonzero pattern of row `i` as `(j, G_ij, B_ij)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[span.clone()]
            .iter()
            .zip(&self.g[span.clone()])
            .zip(&self.b[span])
            .map(|((&j, &g), &b)| (j, g, b))
    }

    pub(crate) fn raw(&self) -> (&[usize], &[usize], &[f64], &[f64]) {
        (&self.row_ptr, &self.col, &self.g, &self.b)
    }

    /// `(G_ij, B_ij)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col[span.clone()].binary_search(&j) {
            Ok(k) => (self.g[span.start + k], self.b[span.start + k]),
            Err(_) => (0.0, 0.0),
        }
    }

    pub fn branch(&self, k: usize) -> Option<&BranchAdmittance> {
        self.branches.get(k).and_then(Option::as_ref)
    }

    pub fn branches(&self) -> impl Iterator<Item = (usize, &BranchAdmittance)> {
        self.branches
            .iter()
            .enumerate()
            .filter_map(|(k, b)| b.as_ref().map(|b| (k, b)))
    }

    pub fn to_dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut g = DMatrix::zeros(self.n, self.n);
        let mut b = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, gij, bij) in self.row(i) {
                g[(i, j)] = gij;
                b[(i, j)] = bij;
            }
        }
        (g, b)
    }
}

/// Standard Y-bus assembly: series admittance `1/(r + jx)`, half line
/// charging at each end, off-nominal taps and phase shifters on the from
/// side, plus bus shunts.
pub fn build_admittance(model: &NetworkModel) -> Result<Admittance> {
    let n = model.n_bus();
    let mut rows: Vec<Vec<(usize, Complex64)>> = (0..n).map(|i| vec![(i, Complex64::ZERO)]).collect();
    let mut add = |i: usize, j: usize, y: Complex64| {
        let row = &mut rows[i];
        match row.iter_mut().find(|(c, _)| *c == j) {
            Some((_, v)) => *v += y,
            None => row.push((j, y)),
        }
    };

    let mut branches = Vec::with_capacity(model.branches.len());
    for br in &model.branches {
        if !br.in_service {
            branches.push(None);
            continue;
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(Error::ZeroImpedance {
                from: model.bus_id(br.from),
                to: model.bus_id(br.to),
            });
        }
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ych = Complex64::new(0.0, br.b / 2.0);
        let tap = Complex64::from_polar(br.tap(), br.shift);
        let ytt = ys + ych;
        let yff = ytt / (tap * tap.conj());
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        add(br.from, br.from, yff);
        add(br.from, br.to, yft);
        add(br.to, br.from, ytf);
        add(br.to, br.to, ytt);
        branches.push(Some(BranchAdmittance {
            from: br.from,
            to: br.to,
            yff,
            yft,
            ytf,
            ytt,
        }));
    }
    for (i, bus) in model.buses.iter().enumerate() {
        add(i, i, Complex64::new(bus.gs, bus.bs));
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::new();
    let mut g = Vec::new();
    let mut b = Vec::new();
    row_ptr.push(0);
    for mut row in rows {
        row.sort_by_key(|(j, _)| *j);
        for (j, y) in row {
            col.push(j);
            g.push(y.re);
            b.push(y.im);
        }
        row_ptr.push(col.len());
    }
    Ok(Admittance {
        n,
        row_ptr,
        col,
        g,
        b,
        branches,
    })
}
