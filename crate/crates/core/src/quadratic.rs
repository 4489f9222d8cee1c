//! Dense quadratic objectives `l(θ) = ½θᵀGθ + bᵀθ`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A strictly increasing set of coordinate indices below some dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct IndexSet(pub(crate) Vec<usize>);

impl IndexSet {
    /// Builds a set from arbitrary indices, sorting them. Duplicates and
    /// indices `>= p` are rejected.
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidIndexSet(format!("duplicate index {}", w[0])));
        }
        if let Some(&last) = indices.last() {
            if last >= p {
                return Err(Error::IndexOutOfRange { index: last, p });
            }
        }
        Ok(IndexSet(indices))
    }

    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// `{0, 1, …, n−1}`.
    pub fn prefix(n: usize) -> Self {
        IndexSet((0..n).collect())
    }

    /// The nonzero coordinates of `v`.
    pub fn support(v: &DVector<f64>) -> Self {
        IndexSet(v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect())
    }

    /// The `s` coordinates of largest absolute value, ties to the lower index.
    pub fn top_abs(v: &DVector<f64>, s: usize) -> Self {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
        order.truncate(s);
        order.sort_unstable();
        IndexSet(order)
    }

    pub fn complement(&self, p: usize) -> Self {
        let mut out = Vec::with_capacity(p.saturating_sub(self.len()));
        let mut it = self.0.iter().peekable();
        for j in 0..p {
            if it.peek() == Some(&&j) {
                it.next();
            } else {
                out.push(j);
            }
        }
        IndexSet(out)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }

    /// `(self ∖ remove) ∪ add`.
    pub fn exchange(&self, remove: &IndexSet, add: &IndexSet) -> IndexSet {
        let mut out: Vec<usize> = self.0.iter().copied().filter(|j| !remove.contains(*j)).collect();
        out.extend(add.iter().copied().filter(|j| !self.contains(*j)));
        out.sort_unstable();
        out.dedup();
        IndexSet(out)
    }

    pub fn intersection_len(&self, other: &IndexSet) -> usize {
        self.0.iter().filter(|j| other.contains(**j)).count()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a usize;
    type IntoIter = std::slice::Iter<'a, usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// `l(θ) = ½θᵀGθ + bᵀθ` with a symmetric Hessian `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    g: DMatrix<f64>,
    b: DVector<f64>,
    asymmetry: f64,
}

impl QuadraticObjective {
    /// Symmetrizes `g` as `(G + Gᵀ)/2`; the largest entrywise deviation
    /// removed is kept in [`asymmetry`](Self::asymmetry).
    pub fn new(g: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let p = b.len();
        if p == 0 {
            return Err(Error::EmptyInput);
        }
        if g.nrows() != p {
            return Err(Error::DimensionMismatch { expected: p, found: g.nrows() });
        }
        if g.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, found: g.ncols() });
        }
        let mut asymmetry = 0.0f64;
        let mut sym = g;
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, c) = (sym[(i, j)], sym[(j, i)]);
                asymmetry = asymmetry.max((a - c).abs());
                let mean = 0.5 * (a + c);
                sym[(i, j)] = mean;
                sym[(j, i)] = mean;
            }
        }
        Ok(QuadraticObjective { g: sym, b, asymmetry })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }

    /// Largest `|G[i][j] − G[j][i]|` seen before symmetrization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    fn check_dim(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: theta.len() });
        }
        Ok(())
    }

    pub fn eval(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(0.5 * theta.dot(&(&self.g * theta)) + self.b.dot(theta))
    }

    /// `Gθ + b`.
    pub fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(theta)?;
        Ok(&self.g * theta + &self.b)
    }

    /// Evaluates a vector known to vanish outside `active`, in O(p·|active|).
    pub(crate) fn eval_sparse(&self, theta: &DVector<f64>, active: &IndexSet) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for &i in active {
            let mut row = 0.0;
            for &j in active {
                row += self.g[(i, j)] * theta[j];
            }
            quad += theta[i] * row;
            lin += self.b[i] * theta[i];
        }
        0.5 * quad + lin
    }

    /// `Gθ + b` for θ supported on `active`.
    pub(crate) fn gradient_sparse(&self, theta: &DVector<f64>, active: &IndexSet) -> DVector<f64> {
        let mut grad = self.b.clone();
        for &j in active {
            let tj = theta[j];
            if tj != 0.0 {
                grad.axpy(tj, &self.g.column(j), 1.0);
            }
        }
        grad
    }

    /// Minimizes over `{θ : supp(θ) ⊆ active}` via a Cholesky solve of
    /// `G_{A×A} θ_A = −b_A`.
    pub fn restricted_minimize(&self, active: &IndexSet) -> Result<DVector<f64>> {
        let p = self.dim();
        if active.is_empty() {
            return Err(Error::InvalidIndexSet("restricted minimization needs a non-empty set".into()));
        }
        if let Some(&last) = active.as_slice().last() {
            if last >= p {
                return Err(Error::IndexOutOfRange { index: last, p });
            }
        }
        let idx = active.as_slice();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |r, c| self.g[(idx[r], idx[c])]);
        let rhs = DVector::from_iterator(k, idx.iter().map(|&j| -self.b[j]));
        let sol = spd_solve(sub, &rhs).ok_or(Error::SingularSubproblem { size: k })?;
        let mut theta = DVector::zeros(p);
        for (r, &j) in idx.iter().enumerate() {
            theta[j] = sol[r];
        }
        Ok(theta)
    }
}

/// Relative pivot floor below which a Cholesky factor is treated as singular.
const PIVOT_FLOOR: f64 = 1e-12;

/// Solves `A x = rhs` for symmetric positive-definite `A` by Cholesky.
/// Returns `None` when `A` is not positive definite or a squared pivot falls
/// below `PIVOT_FLOOR` times the largest diagonal entry.
pub(crate) fn spd_solve(a: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.diagonal().amax();
    if !(scale > 0.0) {
        return None;
    }
    let chol = a.cholesky()?;
    if chol.l_dirty().diagonal().iter().any(|d| d * d < PIVOT_FLOOR * scale) {
        return None;
    }
    Some(chol.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_pd(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(p + 3, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        a.transpose() * a / (p as f64) + DMatrix::identity(p, p) * 0.1
    }

    fn random_vec(p: usize, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    // Independent evaluator: explicit loops, no matrix-vector products.
    fn naive_eval(g: &DMatrix<f64>, b: &DVector<f64>, t: &DVector<f64>) -> f64 {
        let p = t.len();
        let mut total = 0.0;
        for i in 0..p {
            for j in 0..p {
                total += 0.5 * t[i] * g[(i, j)] * t[j];
            }
            total += b[i] * t[i];
        }
        total
    }

    #[test]
    fn eval_trivial_cases() {
        let obj = QuadraticObjective::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        assert_eq!(obj.eval(&DVector::zeros(2)).unwrap(), 0.0);
        let obj = QuadraticObjective::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, 0.0])).unwrap();
        assert_eq!(obj.eval(&DVector::from_vec(vec![1.0, 0.0])).unwrap(), -0.5);
    }

    #[test]
    fn eval_matches_naive_loops() {
        let mut rng = seed::rng(11);
        for _ in 0..20 {
            let g = random_pd(6, &mut rng);
            let b = random_vec(6, &mut rng);
            let t = random_vec(6, &mut rng);
            let obj = QuadraticObjective::new(g.clone(), b.clone()).unwrap();
            let got = obj.eval(&t).unwrap();
            assert!((got - naive_eval(&g, &b, &t)).abs() <= 1e-12 * (1.0 + got.abs()));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let obj = QuadraticObjective::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert_eq!(
            obj.eval(&DVector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        );
        assert!(obj.gradient(&DVector::zeros(4)).is_err());
        assert!(QuadraticObjective::new(DMatrix::identity(3, 3), DVector::zeros(2)).is_err());
    }

    #[test]
    fn gradient_trivial_cases() {
        let obj = QuadraticObjective::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let t = DVector::from_vec(vec![3.0, -4.0]);
        assert_eq!(obj.gradient(&t).unwrap(), t);
        let b = DVector::from_vec(vec![0.5, -2.0]);
        let obj = QuadraticObjective::new(DMatrix::from_diagonal_element(2, 2, 7.0), b.clone()).unwrap();
        assert_eq!(obj.gradient(&DVector::zeros(2)).unwrap(), b);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seed::rng(12);
        let h = 1e-5;
        for _ in 0..20 {
            let p = 7;
            let obj = QuadraticObjective::new(random_pd(p, &mut rng), random_vec(p, &mut rng)).unwrap();
            let t = random_vec(p, &mut rng);
            let grad = obj.gradient(&t).unwrap();
            for j in 0..p {
                let mut up = t.clone();
                let mut dn = t.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (obj.eval(&up).unwrap() - obj.eval(&dn).unwrap()) / (2.0 * h);
                assert!((fd - grad[j]).abs() <= 1e-6 * (1.0 + grad[j].abs()), "{fd} vs {}", grad[j]);
            }
        }
    }

    #[test]
    fn restricted_minimize_diagonal() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let b = DVector::from_vec(vec![-2.0, -4.0]);
        let obj = QuadraticObjective::new(g, b).unwrap();
        let full = obj.restricted_minimize(&IndexSet::prefix(2)).unwrap();
        assert!((full - DVector::from_vec(vec![1.0, 1.0])).amax() <= 1e-15);
        let first = obj.restricted_minimize(&IndexSet::new(vec![0], 2).unwrap()).unwrap();
        assert!((&first - DVector::from_vec(vec![1.0, 0.0])).amax() <= 1e-15);
        assert_eq!(first[1], 0.0);
    }

    #[test]
    fn restricted_minimize_matches_normal_equations() {
        // Oracle: write θ = Pz with P the column selector; the minimizer solves
        // (PᵀGP) z = −Pᵀb, solved here by LU on the explicitly formed product.
        let mut rng = seed::rng(13);
        for _ in 0..20 {
            let p = 8;
            let g = random_pd(p, &mut rng);
            let b = random_vec(p, &mut rng);
            let obj = QuadraticObjective::new(g.clone(), b.clone()).unwrap();
            let active = IndexSet::new(rand::seq::index::sample(&mut rng, p, 3).into_vec(), p).unwrap();
            let sel = DMatrix::from_fn(p, 3, |r, c| if active.as_slice()[c] == r { 1.0 } else { 0.0 });
            let lhs = sel.transpose() * &g * &sel;
            let rhs = -(sel.transpose() * &b);
            let z = lhs.lu().solve(&rhs).unwrap();
            let oracle = &sel * z;
            let got = obj.restricted_minimize(&active).unwrap();
            assert!((got - oracle).amax() <= 1e-9);
        }
    }

    #[test]
    fn restricted_minimize_rejects_indefinite() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let obj = QuadraticObjective::new(g, DVector::zeros(2)).unwrap();
        assert_eq!(
            obj.restricted_minimize(&IndexSet::prefix(2)),
            Err(Error::SingularSubproblem { size: 2 })
        );
        assert!(obj.restricted_minimize(&IndexSet::empty()).is_err());
    }

    #[test]
    fn construction_symmetrizes() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        let obj = QuadraticObjective::new(g, DVector::zeros(2)).unwrap();
        assert_eq!(obj.hessian()[(0, 1)], 0.75);
        assert_eq!(obj.hessian()[(1, 0)], 0.75);
        assert_eq!(obj.asymmetry(), 0.5);
    }

    #[test]
    fn index_set_helpers() {
        assert!(IndexSet::new(vec![1, 1], 3).is_err());
        assert_eq!(IndexSet::new(vec![3], 3), Err(Error::IndexOutOfRange { index: 3, p: 3 }));
        let a = IndexSet::new(vec![4, 0, 2], 5).unwrap();
        assert_eq!(a.as_slice(), &[0, 2, 4]);
        assert_eq!(a.complement(5).as_slice(), &[1, 3]);
        let v = DVector::from_vec(vec![1.0, -3.0, 3.0, 0.5]);
        assert_eq!(IndexSet::top_abs(&v, 2).as_slice(), &[1, 2]);
        assert_eq!(IndexSet::top_abs(&DVector::zeros(4), 2).as_slice(), &[0, 1]);
        let swapped = a.exchange(&IndexSet::new(vec![2], 5).unwrap(), &IndexSet::new(vec![3], 5).unwrap());
        assert_eq!(swapped.as_slice(), &[0, 3, 4]);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn restricted_minimizer_beats_random_probes(seed in any::<u64>(), k in 1usize..6) {
                let mut rng = seed::rng(seed);
                let p = 8;
                let obj = QuadraticObjective::new(random_pd(p, &mut rng), random_vec(p, &mut rng)).unwrap();
                let active = IndexSet::new(rand::seq::index::sample(&mut rng, p, k).into_vec(), p).unwrap();
                let best = obj.restricted_minimize(&active).unwrap();
                let best_val = obj.eval(&best).unwrap();
                let grad = obj.gradient(&best).unwrap();
                for &j in &active {
                    prop_assert!(grad[j].abs() <= 1e-8 * (1.0 + obj.linear().amax()));
                }
                for _ in 0..100 {
                    let mut probe = best.clone();
                    for &j in &active {
                        probe[j] += rng.sample::<f64, _>(StandardNormal);
                    }
                    prop_assert!(obj.eval(&probe).unwrap() >= best_val);
                }
            }

            #[test]
            fn full_support_gives_unconstrained_minimizer(seed in any::<u64>()) {
                let mut rng = seed::rng(seed);
                let p = 6;
                let obj = QuadraticObjective::new(random_pd(p, &mut rng), random_vec(p, &mut rng)).unwrap();
                let theta = obj.restricted_minimize(&IndexSet::prefix(p)).unwrap();
                let resid = obj.gradient(&theta).unwrap().amax();
                prop_assert!(resid <= 1e-8 * obj.linear().amax());
            }
        }
    }
}
