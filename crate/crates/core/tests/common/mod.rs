//! Synthetic trade worlds for end-to-end tests.
//!
//! Each country gets a log10 GDP that drifts upward over the years; its
//! export-category and destination counts follow logistic curves of that
//! log GDP plus Gaussian noise. Flows are laid out so that the generated
//! export counts are exactly what the pipeline should recover.
#![allow(dead_code)]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tradecurve::LogisticParams;

pub const CATEGORY_POOL: usize = 1000;

#[derive(Debug, Clone)]
pub struct WorldSpec {
    pub years: RangeInclusive<i32>,
    pub countries: usize,
    pub export_goods: LogisticParams,
    pub partners: LogisticParams,
    /// Standard deviation of the count noise, as a fraction of each curve's A.
    pub noise: f64,
    /// Destinations per category beyond the first, for file-size scaling.
    pub fanout: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            years: 1990..=1995,
            countries: 80,
            export_goods: LogisticParams::new(900.0, 1.8, 10.7),
            partners: LogisticParams::new(70.0, 1.4, 10.5),
            noise: 0.03,
            fanout: 0,
            seed: 7,
        }
    }
}

pub struct World {
    pub trades: PathBuf,
    pub gdp: PathBuf,
    /// (year, country, log10 GDP, generated export-goods count)
    pub truth: Vec<(i32, String, f64, usize)>,
    pub rows: usize,
}

pub fn country(i: usize) -> String {
    format!("C{i:03}")
}

fn category(i: usize) -> String {
    format!("{:04}", i % CATEGORY_POOL)
}

pub fn write_world(dir: &Path, spec: &WorldSpec) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.countries;
    let base = Normal::<f64>::new(10.3, 1.1).unwrap();
    let bases: Vec<f64> = (0..n).map(|_| base.sample(&mut rng).clamp(7.0, 13.5)).collect();
    let growth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.03)).collect();
    let offsets: Vec<usize> = (0..n).map(|_| rng.random_range(0..CATEGORY_POOL)).collect();
    let export_noise = Normal::new(0.0, spec.noise * spec.export_goods.asymptote).unwrap();
    let partner_noise = Normal::new(0.0, spec.noise * spec.partners.asymptote).unwrap();

    let trades = dir.join("trades.csv");
    let gdp = dir.join("gdp.csv");
    let mut tw = BufWriter::new(File::create(&trades).unwrap());
    let mut gw = BufWriter::new(File::create(&gdp).unwrap());
    writeln!(tw, "year,exporter,importer,sitc,value,quantity").unwrap();
    writeln!(gw, "year,country,gdp").unwrap();
    let mut truth = Vec::new();
    let mut rows = 0;
    let first = *spec.years.start();
    for year in spec.years.clone() {
        for i in 0..n {
            let x = bases[i] + growth[i] * (year - first) as f64;
            let goods = (spec.export_goods.eval(x) + export_noise.sample(&mut rng))
                .round()
                .clamp(1.0, CATEGORY_POOL as f64) as usize;
            let dests = (spec.partners.eval(x) + partner_noise.sample(&mut rng))
                .round()
                .clamp(1.0, (n - 1) as f64) as usize;
            writeln!(gw, "{year},{},{}", country(i), 10f64.powf(x)).unwrap();
            truth.push((year, country(i), x, goods));
            for j in 0..goods.max(dests) {
                let cat = category(offsets[i] + j % goods);
                for f in 0..=spec.fanout {
                    let dest = (i + 1 + (j + f) % dests) % n;
                    let value = 1.0 + ((i * 31 + j * 7 + f) % 997) as f64;
                    writeln!(tw, "{year},{},{},{cat},{value},", country(i), country(dest)).unwrap();
                    rows += 1;
                }
            }
        }
    }
    tw.flush().unwrap();
    gw.flush().unwrap();
    World {
        trades,
        gdp,
        truth,
        rows,
    }
}

/// A world where every country's four diversity counts are equal, so every
/// pairwise power law is exactly `Y = X`.
///
/// Countries `i` and `j` trade both ways when `i + j >= n`, each link with
/// its own category.
pub fn write_symmetric_world(dir: &Path, n: usize, year: i32) -> (PathBuf, PathBuf) {
    let trades = dir.join("sym_trades.csv");
    let gdp = dir.join("sym_gdp.csv");
    let mut tw = BufWriter::new(File::create(&trades).unwrap());
    let mut gw = BufWriter::new(File::create(&gdp).unwrap());
    writeln!(tw, "year,exporter,importer,sitc,value,quantity").unwrap();
    writeln!(gw, "year,country,gdp").unwrap();
    let mut link = 0;
    for i in 0..n {
        writeln!(gw, "{year},{},{}", country(i), 1e9 * (i + 1) as f64).unwrap();
        for j in (i + 1)..n {
            if i + j >= n {
                let cat = format!("L{link:05}");
                writeln!(tw, "{year},{},{},{cat},1,", country(i), country(j)).unwrap();
                writeln!(tw, "{year},{},{},{cat},1,", country(j), country(i)).unwrap();
                link += 1;
            }
        }
    }
    tw.flush().unwrap();
    gw.flush().unwrap();
    (trades, gdp)
}
