//! Small fixed-size linear algebra for 2D points and element Jacobians.

/// A point or vector in the plane.
pub type Point2 = [f64; 2];

#[inline]
pub fn add(a: Point2, b: Point2) -> Point2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(s: f64, a: Point2) -> Point2 {
    [s * a[0], s * a[1]]
}

#[inline]
pub fn dot(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point2) -> f64 {
    dot(a, a).sqrt()
}

/// Midpoint of the segment `ab`.
#[inline]
pub fn midpoint(a: Point2, b: Point2) -> Point2 {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Row-major 2x2 matrix; `m[r][c]` is row `r`, column `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    /// Outer product `a bᵀ`.
    #[inline]
    pub fn outer(a: Point2, b: Point2) -> Mat2 {
        Mat2([[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]])
    }

    #[inline]
    pub fn transpose(self) -> Mat2 {
        Mat2([[self.0[0][0], self.0[1][0]], [self.0[0][1], self.0[1][1]]])
    }

    #[inline]
    pub fn det(self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    #[inline]
    pub fn trace(self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    #[inline]
    pub fn mul_vec(self, v: Point2) -> Point2 {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    #[inline]
    pub fn add(self, other: Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] + other.0[0][0], self.0[0][1] + other.0[0][1]],
            [self.0[1][0] + other.0[1][0], self.0[1][1] + other.0[1][1]],
        ])
    }

    #[inline]
    pub fn scale(self, s: f64) -> Mat2 {
        Mat2([
            [s * self.0[0][0], s * self.0[0][1]],
            [s * self.0[1][0], s * self.0[1][1]],
        ])
    }

    /// Inverse; caller guarantees a nonzero determinant.
    #[inline]
    pub fn inverse(self) -> Mat2 {
        let d = self.det();
        Mat2([
            [self.0[1][1] / d, -self.0[0][1] / d],
            [-self.0[1][0] / d, self.0[0][0] / d],
        ])
    }

    #[inline]
    pub fn mul(self, other: Mat2) -> Mat2 {
        let a = self.0;
        let b = other.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    #[inline]
    pub fn frobenius_sq(self) -> f64 {
        let m = self.0;
        m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]
    }

    /// Double contraction `A : B`.
    #[inline]
    pub fn ddot(self, other: Mat2) -> f64 {
        let a = self.0;
        let b = other.0;
        a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
    }
}
