//! Exact rational linear algebra: rank, null spaces and row-space bases.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Matrix = Vec<Vec<BigRational>>;

pub fn to_rational(rows: &[Vec<i64>]) -> Matrix {
    rows.iter().map(|r| r.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect()).collect()
}

/// Reduced row echelon form. Returns the reduced matrix and pivot columns.
pub fn rref(rows: &Matrix, n_cols: usize) -> (Matrix, Vec<usize>) {
    let mut m: Matrix = rows.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n_cols {
        if r == m.len() {
            break;
        }
        let Some(p) = (r..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = BigRational::one() / m[r][col].clone();
        for x in m[r].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let factor = m[i][col].clone();
                for j in 0..n_cols {
                    let delta = &factor * &m[r][j];
                    m[i][j] -= delta;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    (m, pivots)
}

pub fn rank(rows: &Matrix, n_cols: usize) -> usize {
    rref(rows, n_cols).1.len()
}

/// Basis of {v : row · v = 0 for every row}, one vector per free column.
pub fn null_space(rows: &Matrix, n_cols: usize) -> Vec<Vec<BigRational>> {
    let (m, pivots) = rref(rows, n_cols);
    let free: Vec<usize> = (0..n_cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); n_cols];
            v[f] = BigRational::one();
            for (row, &p) in pivots.iter().enumerate() {
                v[p] = -m[row][f].clone();
            }
            v
        })
        .collect()
}

/// Basis of the row space (the non-zero rows of the reduced form).
pub fn row_space_basis(rows: &Matrix, n_cols: usize) -> Vec<Vec<BigRational>> {
    let (m, pivots) = rref(rows, n_cols);
    m.into_iter().take(pivots.len()).collect()
}

/// Scales a rational vector to the primitive integer vector on the same ray
/// (denominators cleared, content divided out).
pub fn primitive_integer(v: &[BigRational]) -> Vec<BigInt> {
    let lcm = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * BigRational::from_integer(lcm.clone())).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|x| x / &g).collect()
}

/// gcd of the absolute values of a slice (0 for an all-zero slice).
pub fn gcd_slice(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, &x| g.gcd(&x.abs()))
}

pub fn is_positive_vector(v: &[BigInt]) -> bool {
    v.iter().all(|x| x.is_positive())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(rows: &[&[i64]]) -> Matrix {
        to_rational(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn rank_of_hand_examples() {
        // Ex1 network with changes (0,1),(0,-1),(1,0),(-2,1),(1,-1).
        assert_eq!(rank(&q(&[&[0, 1], &[0, -1], &[1, 0], &[-2, 1], &[1, -1]]), 2), 2);
        assert_eq!(rank(&q(&[&[1, -1], &[-1, 1]]), 2), 1);
        assert_eq!(rank(&q(&[]), 3), 0);
        assert_eq!(rank(&q(&[&[0, 0, 0]]), 3), 0);
    }

    #[test]
    fn null_space_vectors_are_annihilated() {
        let m = q(&[&[1, 1, -1], &[2, 2, -2]]);
        let ns = null_space(&m, 3);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            for row in &m {
                let dot: BigRational = row.iter().zip(v).map(|(a, b)| a * b).sum();
                assert!(dot.is_zero());
            }
        }
    }

    #[test]
    fn primitive_integer_clears_denominators() {
        let v = vec![
            BigRational::new(BigInt::from(1), BigInt::from(2)),
            BigRational::new(BigInt::from(-3), BigInt::from(4)),
        ];
        assert_eq!(primitive_integer(&v), vec![BigInt::from(2), BigInt::from(-3)]);
        assert_eq!(gcd_slice(&[4, -6, 0]), 2);
    }
}
