//! Row-major dense matrices and a strided GEMM wrapper.

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} vs {} values", data.len());
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn argmax_row(&self, r: usize) -> usize {
        let row = self.row(r);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// Strided view used by [`gemm`]: element (i, j) lives at `off + i*rs + j*cs`.
#[derive(Clone, Copy)]
pub(crate) struct View {
    pub off: usize,
    pub rs: isize,
    pub cs: isize,
}

impl View {
    pub fn rowmajor(off: usize, cols: usize) -> Self {
        Self {
            off,
            rs: cols as isize,
            cs: 1,
        }
    }

    /// The transpose of a row-major block.
    pub fn transposed(off: usize, cols: usize) -> Self {
        Self {
            off,
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `c = alpha * a(m×k) · b(k×n) + beta * c` over strided views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    av: View,
    b: &[f64],
    bv: View,
    beta: f64,
    c: &mut [f64],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |v: View, r: usize, cc: usize| {
        v.off + (r.saturating_sub(1)) * v.rs.unsigned_abs() + (cc.saturating_sub(1)) * v.cs.unsigned_abs()
    };
    if k > 0 {
        assert!(span(av, m, k) < a.len() && span(bv, k, n) < b.len());
    }
    assert!(span(cv, m, n) < c.len());
    // SAFETY: the bounds of all three strided views were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.off),
            av.rs,
            av.cs,
            b.as_ptr().add(bv.off),
            bv.rs,
            bv.cs,
            beta,
            c.as_mut_ptr().add(cv.off),
            cv.rs,
            cv.cs,
        );
    }
}

/// `a(m×k) · b(k×n)`, both row-major.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows);
    let mut c = Mat::zeros(a.rows, b.cols);
    gemm(
        a.rows,
        a.cols,
        b.cols,
        1.0,
        &a.data,
        View::rowmajor(0, a.cols),
        &b.data,
        View::rowmajor(0, b.cols),
        0.0,
        &mut c.data,
        View::rowmajor(0, b.cols),
    );
    c
}
