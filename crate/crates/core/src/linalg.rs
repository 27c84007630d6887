//! Small exact integer linear algebra for incidence matrices.

/// Integer matrix in reduced row-echelon form together with its pivots.
#[derive(Debug, Clone)]
pub(crate) struct Echelon {
    pub rows: Vec<Vec<i64>>,
    pub pivots: Vec<usize>,
    pub cols: usize,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn normalise(row: &mut [i64]) {
    let g = row.iter().fold(0, |g, &x| gcd(g, x));
    if g > 1 {
        row.iter_mut().for_each(|x| *x /= g);
    }
    if let Some(first) = row.iter().find(|&&x| x != 0) {
        if *first < 0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Fraction-free reduction of `m` (rows of equal length `cols`) to a form in
/// which every pivot column is zero outside its pivot row.
pub(crate) fn echelon(m: &[Vec<i64>], cols: usize) -> Echelon {
    let mut rows: Vec<Vec<i64>> = m.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c] != 0) else {
            continue;
        };
        rows.swap(r, p);
        for i in 0..rows.len() {
            if i != r && rows[i][c] != 0 {
                let a = rows[r][c];
                let b = rows[i][c];
                let pivot_row = rows[r].clone();
                for (x, y) in rows[i].iter_mut().zip(pivot_row.iter()) {
                    *x = *x * a - y * b;
                }
                normalise(&mut rows[i]);
            }
        }
        normalise(&mut rows[r]);
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.truncate(r);
    Echelon { rows, pivots, cols }
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn free_columns(&self) -> Vec<usize> {
        (0..self.cols).filter(|c| !self.pivots.contains(c)).collect()
    }

    /// Solve `M x = rhs` for the pivot variables given values of the free
    /// ones. `rhs` must come from [`solve_system`] (or be all zeros).
    /// Returns `None` when the solution is not integral.
    pub fn complete(&self, free_values: &[(usize, i64)], rhs: &[i64]) -> Option<Vec<i64>> {
        let mut x = vec![0i64; self.cols];
        for &(c, v) in free_values {
            x[c] = v;
        }
        for (row, &pc) in self.rows.iter().zip(&self.pivots).rev() {
            let idx = self.pivots.iter().position(|&p| p == pc).unwrap();
            let mut acc = rhs.get(idx).copied().unwrap_or(0);
            for (c, &a) in row.iter().enumerate() {
                if c != pc {
                    acc -= a * x[c];
                }
            }
            let a = row[pc];
            if acc % a != 0 {
                return None;
            }
            x[pc] = acc / a;
        }
        Some(x)
    }
}

/// Null-space basis over the rationals, scaled to integer vectors.
pub(crate) fn null_space(m: &[Vec<i64>], cols: usize) -> Vec<Vec<i64>> {
    let e = echelon(m, cols);
    let mut basis = Vec::new();
    for f in e.free_columns() {
        // x_f = L, other free = 0, pivots from the reduced rows scaled by L.
        let l = e.rows.iter().zip(&e.pivots).fold(1i64, |acc, (row, &pc)| {
            let a = row[pc].abs();
            acc / gcd(acc, a) * a
        });
        let mut v = vec![0i64; cols];
        v[f] = l;
        for (row, &pc) in e.rows.iter().zip(&e.pivots) {
            v[pc] = -row[f] * l / row[pc];
        }
        let g = v.iter().fold(0, |g, &x| gcd(g, x));
        if g > 1 {
            v.iter_mut().for_each(|x| *x /= g);
        }
        basis.push(v);
    }
    basis
}

/// Reduce a general linear system `M x = b` (integer `b`) with the same row
/// operations as [`echelon`]; returns the reduced matrix and right-hand side
/// or `None` when the system is inconsistent.
pub(crate) fn solve_system(m: &[Vec<i64>], b: &[i64], cols: usize) -> Option<(Echelon, Vec<i64>)> {
    let aug: Vec<Vec<i64>> = m
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let e = echelon(&aug, cols + 1);
    if e.pivots.contains(&cols) {
        return None;
    }
    let rhs: Vec<i64> = e.rows.iter().map(|r| r[cols]).collect();
    let rows: Vec<Vec<i64>> = e.rows.iter().map(|r| r[..cols].to_vec()).collect();
    Some((
        Echelon {
            rows,
            pivots: e.pivots,
            cols,
        },
        rhs,
    ))
}
