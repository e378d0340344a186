#![allow(dead_code)]

use freeconvex::linalg::{c, zeros, CMat};
use freeconvex::ncpoly::NcPoly;
use freeconvex::parser::{parse, to_polynomial, to_polynomial_with_vars};
use freeconvex::pencil::LinearPencil;

pub const F1_DEG4: &str = "1 + x1 + x1' - 2*x1*x1' - (x1 + x1')*x1*x1'";
pub const S_DEG4: &str = "1 + 0.5*(x1 + x1')";
pub const L_DEG4: &str = "[[1 + x1 + x1', 0, x1], [0, 1, x1], [x1', x1', 1]]";

pub const F1_DEG56: &str = "1 - (x1 + x1') - 2*(x1 + x1')*(x1 + x1') - 2*x1'*x1 \
    + (x1 + x1')*(x1 + x1')*(x1 + x1') + 2*(x1 + x1')*(x1 + x1')*x1'*x1";
pub const S_DEG56: &str = "1 - (x1 + x1')*(x1 + x1')";
pub const SQRT2: f64 = std::f64::consts::SQRT_2;

pub fn l_deg56() -> LinearPencil {
    let r = SQRT2;
    let text = format!(
        "[[1 - 0.5*(x1 + x1'), -{r}*(x1 + x1'), 0.5*(x1 + x1'), x1'], \
          [-{r}*(x1 + x1'), 1, 0, 0], \
          [0.5*(x1 + x1'), 0, 1 - 0.5*(x1 + x1'), -x1'], \
          [x1, 0, -x1, 1]]"
    );
    pencil(&text)
}

pub const Q_DEG56: &str = "[[1 - 0.5*x1 - 0.5*x1' - 2*x1*x1 - 2*x1*x1' - 3*x1'*x1 - 2*x1'*x1', 0.5*x1 + 0.5*x1' + x1'*x1], \
    [0.5*x1 + 0.5*x1' + x1'*x1, 1 - 0.5*x1 - 0.5*x1' - x1'*x1]]";

pub const F_HIGH: &str = "1 + 4*(x1 + x1') + 2*(x1*x1 + x1'*x1') - x1*x1' - 7*x1*x1'*(x1 + x1') \
    - 4*x1'*x1*(x1 + x1') - x1*x1'*(x1*x1 + x1'*x1') + 2*x1*x1'*(x1*x1' + x1'*x1)*(x1 + x1')";
pub const L_HIGH: &str = "[[1 - x1 - x1', x1, -x1 - x1', x1, -x1, x1 + x1'], \
    [x1', 1, 0, 0, 0, 0], \
    [-x1 - x1', 0, 1 + x1 + x1', -x1, x1, -x1 - x1'], \
    [x1', 0, -x1', 1, 0, 0], \
    [-x1', 0, x1', 0, 1, 0], \
    [x1 + x1', 0, -x1 - x1', 0, 0, 1 + 2*x1 + 2*x1']]";

pub const F_MATRIX: &str = "[[1, 0, x1], [0, 1, x1'*x1], [x1', (x1'*x1)', 1 + (x1'*x1)'*(x1'*x1)]]";
pub const F_MATRIX_LINEAR_P: &str = "[[1, 0, x1], [0, 1, x1], [x1', x1', 1 + x1'*x1]]";

pub const NONCONVEX: &str = "1 - x1*x1 - x1'*x1'";

pub fn poly(s: &str) -> NcPoly {
    to_polynomial(&parse(s).unwrap()).unwrap()
}

pub fn poly_g(s: &str, g: usize) -> NcPoly {
    to_polynomial_with_vars(&parse(s).unwrap(), g).unwrap()
}

pub fn pencil(s: &str) -> LinearPencil {
    LinearPencil::from_ncpoly(&poly(s)).unwrap()
}

/// `[[1, x1], [x1*, 1]]`, the unit ball in one variable.
pub fn ball() -> LinearPencil {
    let mut a = zeros(2, 2);
    a[(0, 1)] = c(-1.0, 0.0);
    LinearPencil::hermitian(vec![a]).unwrap()
}

pub fn scalar_pencil(k0: f64, kx: f64, kxs: f64) -> LinearPencil {
    let m = |v: f64| CMat::from_element(1, 1, c(v, 0.0));
    LinearPencil::new(m(k0), vec![m(kx)], vec![m(kxs)]).unwrap()
}
