use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use super::Measure;
use crate::error::{Error, Result};

/// Points drawn per independent stream.
pub const SHARD_SIZE: usize = 8192;

/// Proposals allowed per accepted tilt sample.
const TILT_CAP: usize = 10_000;

impl Measure {
    /// n points, row-major. Shard s uses stream s of a ChaCha8 generator
    /// seeded with `seed`, so output is identical for any thread count.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let d = self.dim();
        let shards = n.div_ceil(SHARD_SIZE);
        let parts: Vec<Result<Vec<f64>>> = (0..shards)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                let count = SHARD_SIZE.min(n - s * SHARD_SIZE);
                let mut out = Vec::with_capacity(count * d);
                let mut buf = vec![0.0; d];
                for _ in 0..count {
                    self.draw(&mut rng, &mut buf)?;
                    out.extend_from_slice(&buf);
                }
                Ok(out)
            })
            .collect();
        let mut points = Vec::with_capacity(n * d);
        for p in parts {
            points.extend(p?);
        }
        Ok(points)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        match self {
            Measure::Atoms(a) => {
                let i = a.locate(rng.random::<f64>());
                out.copy_from_slice(a.point(i));
            }
            Measure::Gaussian(g) => {
                let z: Vec<f64> = (0..g.dim()).map(|_| rng.sample(StandardNormal)).collect();
                g.transform(&z, out);
            }
            Measure::PoissonLaw { rate } => {
                let dist = Poisson::new(*rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
                out[0] = dist.sample(rng);
            }
            Measure::Product(fs) => {
                let mut offset = 0;
                for m in fs {
                    let d = m.dim();
                    m.draw(rng, &mut out[offset..offset + d])?;
                    offset += d;
                }
            }
            Measure::Convolution(ps) => {
                let mut buf = vec![0.0; out.len()];
                out.fill(0.0);
                for m in ps {
                    m.draw(rng, &mut buf)?;
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += b;
                    }
                }
            }
            Measure::Pushforward { map, base } => {
                let mut buf = vec![0.0; base.dim()];
                base.draw(rng, &mut buf)?;
                out.copy_from_slice(&map.apply(&buf));
            }
            Measure::Tilt(t) => {
                for _ in 0..TILT_CAP {
                    t.base().draw(rng, out)?;
                    let accept = (t.potential().eval(out) - t.sup()).exp();
                    if rng.random::<f64>() < accept {
                        return Ok(());
                    }
                }
                return Err(Error::IllConditionedTilt { cap: TILT_CAP });
            }
        }
        Ok(())
    }
}

/// One point per row, comma separated, with columns x1..xd.
pub fn write_samples_csv<W: Write>(dim: usize, points: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    w.write_record(&header)?;
    for row in points.chunks(dim) {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::measure::Atoms;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn dirac_repeats_its_point() {
        let mu = Measure::Atoms(Atoms::dirac(&[2.5]));
        assert_eq!(mu.sample(5, 11).unwrap(), vec![2.5; 5]);
    }

    #[test]
    fn gaussian_mean_within_clt_bound() {
        let n = 1_000_000;
        let xs = Measure::standard_normal().sample(n, 7).unwrap();
        let (m, _) = mean_var(&xs);
        assert!(m.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn convolution_variance_adds() {
        let n = 200_000;
        let mu = Measure::convolution(vec![Measure::standard_normal(), Measure::standard_normal()]).unwrap();
        let xs = mu.sample(n, 3).unwrap();
        let (_, v) = mean_var(&xs);
        // Var of the sample variance of N(0,2) is 2σ⁴/(n−1).
        let se = (2.0 * 4.0 / (n as f64 - 1.0)).sqrt();
        assert!((v - 2.0).abs() < 4.0 * se);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let mu = Measure::poisson(3.0).unwrap();
        let a = mu.sample(20_000, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mu.sample(20_000, 42).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, mu.sample(20_000, 43).unwrap());
    }

    #[test]
    fn tilt_sampling_matches_quadrature() {
        let b = ScalarField::sine(0.3, 1.0, 0.0, 0.0);
        let mu = Measure::tilt(b, Measure::standard_normal()).unwrap();
        let n = 200_000;
        let xs = mu.sample(n, 5).unwrap();
        let (m, v) = mean_var(&xs);
        let exact = mu
            .expect(&ScalarField::coordinate(1, 0), &crate::measure::ExpectationPlan::GH_DEFAULT)
            .unwrap();
        assert!((m - exact).abs() < 4.0 * (v / n as f64).sqrt());
    }

    #[test]
    fn csv_dump_has_one_row_per_point() {
        let mut buf = Vec::new();
        write_samples_csv(2, &[1.0, 2.0, 3.0, 4.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,x2\n1,2\n3,4\n");
    }
}
