//! Product-form basis inverse.
//!
//! The inverse is kept as a sequence of elementary column transformations
//! (eta matrices). Reinversion orders structural columns by row singletons
//! first so triangular parts of the basis produce no fill.

/// Constraint matrix `[A | -I]` in compressed column form. Columns `0..n` are
/// structural, column `n + i` is the logical of row `i`.
#[derive(Debug, Clone)]
pub(crate) struct Matrix {
    pub m: usize,
    pub n: usize,
    pub start: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Matrix {
    #[inline]
    pub fn for_each_in_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for k in self.start[j]..self.start[j + 1] {
                f(self.idx[k], self.val[k]);
            }
        } else {
            f(j - self.n, -1.0);
        }
    }

    #[inline]
    pub fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for k in self.start[j]..self.start[j + 1] {
                s += self.val[k] * y[self.idx[k]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Eta {
    row: usize,
    pivot: f64,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Factor {
    etas: Vec<Eta>,
    idx: Vec<usize>,
    val: Vec<f64>,
    base: usize,
}

const DROP: f64 = 1e-14;
const PIVOT_MIN: f64 = 1e-9;

impl Factor {
    /// Number of updates since the last reinversion.
    pub fn updates(&self) -> usize {
        self.etas.len() - self.base
    }

    fn push(&mut self, row: usize, pivot: f64, dense: &[f64]) {
        let start = self.idx.len();
        for (i, &a) in dense.iter().enumerate() {
            if i != row && a.abs() > DROP {
                self.idx.push(i);
                self.val.push(a);
            }
        }
        self.etas.push(Eta {
            row,
            pivot,
            start,
            end: self.idx.len(),
        });
    }

    /// Records a basis change: the column with `B^-1 a = alpha` enters at `row`.
    pub fn update(&mut self, row: usize, alpha: &[f64]) {
        self.push(row, alpha[row], alpha);
    }

    /// `v <- B^-1 v`.
    pub fn ftran(&self, v: &mut [f64]) {
        for eta in &self.etas {
            let xr = v[eta.row];
            if xr == 0.0 {
                continue;
            }
            let xr = xr / eta.pivot;
            v[eta.row] = xr;
            for k in eta.start..eta.end {
                v[self.idx[k]] -= self.val[k] * xr;
            }
        }
    }

    /// `v <- B^-T v`.
    pub fn btran(&self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = v[eta.row];
            for k in eta.start..eta.end {
                s -= self.val[k] * v[self.idx[k]];
            }
            v[eta.row] = s / eta.pivot;
        }
    }
}

/// Result of a reinversion: the factor, the variable basic in each row
/// position, and basic variables dropped because the basis was singular
/// (their rows are covered by logicals instead).
pub(crate) struct Reinversion {
    pub factor: Factor,
    pub head: Vec<usize>,
    pub rejected: Vec<usize>,
}

pub(crate) fn reinvert(mat: &Matrix, basic: &[usize]) -> Reinversion {
    let m = mat.m;
    let n = mat.n;
    let mut factor = Factor::default();
    let mut head = vec![usize::MAX; m];
    let mut work = vec![0.0; m];

    // Logicals are plain sign flips.
    let mut structural = Vec::new();
    for &j in basic {
        if j >= n {
            let r = j - n;
            debug_assert_eq!(head[r], usize::MAX);
            factor.etas.push(Eta {
                row: r,
                pivot: -1.0,
                start: factor.idx.len(),
                end: factor.idx.len(),
            });
            head[r] = j;
        } else {
            structural.push(j);
        }
    }

    let mut row_count = vec![0usize; m];
    let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (c, &j) in structural.iter().enumerate() {
        mat.for_each_in_col(j, |i, _| {
            if head[i] == usize::MAX {
                row_count[i] += 1;
                row_cols[i].push(c);
            }
        });
    }
    let mut placed = vec![false; structural.len()];
    let mut remaining = structural.len();
    let mut singletons: Vec<usize> = (0..m).filter(|&i| head[i] == usize::MAX && row_count[i] == 1).collect();
    let mut rejected = Vec::new();

    let place = |c: usize,
                 r: usize,
                 work: &mut Vec<f64>,
                 factor: &mut Factor,
                 head: &mut Vec<usize>,
                 row_count: &mut Vec<usize>,
                 singletons: &mut Vec<usize>| {
        let pivot = work[r];
        factor.push(r, pivot, work);
        head[r] = structural[c];
        mat.for_each_in_col(structural[c], |i, _| {
            if row_count[i] > 0 {
                row_count[i] -= 1;
                if row_count[i] == 1 && head[i] == usize::MAX {
                    singletons.push(i);
                }
            }
        });
    };

    let load = |j: usize, work: &mut Vec<f64>, factor: &Factor| {
        work.iter_mut().for_each(|w| *w = 0.0);
        mat.for_each_in_col(j, |i, a| work[i] = a);
        factor.ftran(work);
    };

    while remaining > 0 {
        while let Some(r) = singletons.pop() {
            if head[r] != usize::MAX || row_count[r] != 1 {
                continue;
            }
            let Some(&c) = row_cols[r].iter().find(|&&c| !placed[c]) else {
                continue;
            };
            load(structural[c], &mut work, &factor);
            if work[r].abs() < 1e-7 {
                continue;
            }
            place(c, r, &mut work, &mut factor, &mut head, &mut row_count, &mut singletons);
            placed[c] = true;
            remaining -= 1;
        }
        if remaining == 0 {
            break;
        }
        // Bump: sparsest remaining column, threshold pivoting on the sparsest row.
        let c = (0..structural.len())
            .filter(|&c| !placed[c])
            .min_by_key(|&c| {
                let mut k = 0;
                mat.for_each_in_col(structural[c], |i, _| {
                    if head[i] == usize::MAX {
                        k += 1;
                    }
                });
                (k, c)
            })
            .expect("remaining columns");
        load(structural[c], &mut work, &factor);
        let amax = (0..m)
            .filter(|&i| head[i] == usize::MAX)
            .map(|i| work[i].abs())
            .fold(0.0, f64::max);
        placed[c] = true;
        remaining -= 1;
        if amax < PIVOT_MIN {
            rejected.push(structural[c]);
            continue;
        }
        let r = (0..m)
            .filter(|&i| head[i] == usize::MAX && work[i].abs() >= 0.1 * amax)
            .min_by(|&a, &b| {
                row_count[a]
                    .cmp(&row_count[b])
                    .then(work[b].abs().total_cmp(&work[a].abs()))
            })
            .expect("pivot candidate");
        place(c, r, &mut work, &mut factor, &mut head, &mut row_count, &mut singletons);
    }

    for (r, h) in head.iter_mut().enumerate().take(m) {
        if *h == usize::MAX {
            factor.etas.push(Eta {
                row: r,
                pivot: -1.0,
                start: factor.idx.len(),
                end: factor.idx.len(),
            });
            *h = n + r;
        }
    }
    factor.base = factor.etas.len();
    Reinversion { factor, head, rejected }
}
