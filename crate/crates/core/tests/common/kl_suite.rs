//! Closed-form KL divergences against Monte-Carlo and direct-summation
//! oracles on random distribution pairs.

use evodg::distributions::{CategoricalDist, DiagGaussian};
use evodg::rng::SeedTree;
use evodg::Tensor;
use rand::Rng as _;

use super::{direct_categorical_kl, mc_categorical_kl, mc_gaussian_kl};

pub const PAIRS: usize = 50;
pub const SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, Default)]
pub struct KlReport {
    /// Largest `|closed − MC| / SE` over the Gaussian pairs.
    pub gaussian_z: f64,
    /// Largest `|closed − MC| / SE` over the categorical pairs.
    pub categorical_z: f64,
    /// Largest `|closed − direct sum|` over the categorical pairs.
    pub categorical_direct: f64,
}

impl KlReport {
    pub fn passes(&self) -> bool {
        self.gaussian_z < 3.0 && self.categorical_z < 3.0 && self.categorical_direct < 1e-12
    }
}

fn uniform_vec(rng: &mut evodg::rng::Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn run(samples: usize) -> KlReport {
    let mut report = KlReport::default();
    let tree = SeedTree::new(31);
    for i in 0..PAIRS {
        let mut rng = tree.child("gaussian").index(i as u64).rng();
        let d = 3;
        let (qm, qlv) = (uniform_vec(&mut rng, d, -2.0, 2.0), uniform_vec(&mut rng, d, -1.5, 1.5));
        let (pm, plv) = (uniform_vec(&mut rng, d, -2.0, 2.0), uniform_vec(&mut rng, d, -1.5, 1.5));
        let q = DiagGaussian::new(Tensor::row_vector(&qm), Tensor::row_vector(&qlv)).unwrap();
        let p = DiagGaussian::new(Tensor::row_vector(&pm), Tensor::row_vector(&plv)).unwrap();
        let closed = q.kl(&p).unwrap()[0];
        let var = |lv: &[f64]| lv.iter().map(|v| v.exp()).collect::<Vec<_>>();
        let (mc, se) = mc_gaussian_kl(&qm, &var(&qlv), &pm, &var(&plv), samples, &mut rng);
        report.gaussian_z = report.gaussian_z.max((closed - mc).abs() / se);

        let mut rng = tree.child("categorical").index(i as u64).rng();
        let k = rng.random_range(2..7);
        let ql = Tensor::row_vector(&uniform_vec(&mut rng, k, -3.0, 3.0));
        let pl = Tensor::row_vector(&uniform_vec(&mut rng, k, -3.0, 3.0));
        let q = CategoricalDist::new(ql).unwrap();
        let p = CategoricalDist::new(pl).unwrap();
        let closed = q.kl(&p).unwrap()[0];
        let (qp, pp) = (q.probs(), p.probs());
        let direct = direct_categorical_kl(qp.row(0), pp.row(0));
        report.categorical_direct = report.categorical_direct.max((closed - direct).abs());
        let (mc, se) = mc_categorical_kl(qp.row(0), pp.row(0), samples, &mut rng);
        report.categorical_z = report.categorical_z.max((closed - mc).abs() / se);
    }
    report
}
