//! Synthetic desk-scale study region.
//!
//! Cells lie on a square grid around one main centre and optional
//! secondary centres. Employment, building density and land prices fall off
//! with distance from the centres; households are placed in proportion to
//! housing stock. The road network links every cell to its eight grid
//! neighbours with edge lengths equal to centroid distances.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::{assign_segment, CellId, City, Edge, Household, MeshCell, Region};
use crate::accessibility::{tour_logsums, Employment, LogsumConfig, TravelTimeConfig, TravelTimes};
use crate::hedonic::{predict_land_price, HedonicCoefficients};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterSpec {
    /// Position as a fraction of the grid extent.
    pub x_frac: f64,
    pub y_frac: f64,
    /// Relative employment weight.
    pub strength: f64,
    pub daa_radius_m: f64,
    pub ufaa_radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub cell_size_m: f64,
    pub centroid_jitter_m: f64,
    /// The first centre is the main one; it anchors land-use gradients and
    /// city sectors.
    pub centers: Vec<CenterSpec>,
    /// Cells farther than this from the main centre belong to no named city.
    pub city_radius_m: f64,
    /// Tertiary employees (thousands) at a centre of strength 1.
    pub tertiary_peak: f64,
    pub employment_decay_m: f64,
    /// Housing units generated per household.
    pub stock_per_household: f64,
    /// Standard deviation of the log land-price residual.
    pub price_noise_sd: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            cell_size_m: 1000.0,
            centroid_jitter_m: 150.0,
            centers: vec![
                CenterSpec {
                    x_frac: 0.5,
                    y_frac: 0.5,
                    strength: 1.0,
                    daa_radius_m: 1600.0,
                    ufaa_radius_m: 800.0,
                },
                CenterSpec {
                    x_frac: 0.2,
                    y_frac: 0.8,
                    strength: 0.35,
                    daa_radius_m: 700.0,
                    ufaa_radius_m: 400.0,
                },
            ],
            city_radius_m: 4500.0,
            tertiary_peak: 8.0,
            employment_decay_m: 1500.0,
            stock_per_household: 1.25,
            price_noise_sd: 0.15,
        }
    }
}

/// Generates a region with default layout, travel and logsum settings.
pub fn generate_synthetic_region(n_cells: usize, n_households: usize, seed: u64) -> Result<Region> {
    generate_synthetic_region_with(
        &GeneratorConfig::default(),
        &TravelTimeConfig::default(),
        &LogsumConfig::default(),
        n_cells,
        n_households,
        seed,
    )
}

pub fn generate_synthetic_region_with(
    config: &GeneratorConfig,
    travel: &TravelTimeConfig,
    logsum: &LogsumConfig,
    n_cells: usize,
    n_households: usize,
    seed: u64,
) -> Result<Region> {
    if n_cells < 4 {
        return Err(Error::Domain(format!(
            "need at least 4 cells, got {n_cells}"
        )));
    }
    if n_households < 1 {
        return Err(Error::Domain("need at least 1 household".into()));
    }
    if config.centers.is_empty() {
        return Err(Error::Config("generator needs at least one centre".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n_cells as f64).sqrt().ceil() as usize;
    let size = config.cell_size_m;
    let extent = side as f64 * size;

    let positions: Vec<(f64, f64)> = (0..n_cells)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            let j = config.centroid_jitter_m;
            let jx = if j > 0.0 {
                rng.random_range(-j..j)
            } else {
                0.0
            };
            let jy = if j > 0.0 {
                rng.random_range(-j..j)
            } else {
                0.0
            };
            (
                (col as f64 + 0.5) * size + jx,
                (row as f64 + 0.5) * size + jy,
            )
        })
        .collect();
    let centers: Vec<(f64, f64)> = config
        .centers
        .iter()
        .map(|c| (c.x_frac * extent, c.y_frac * extent))
        .collect();
    let dist = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();

    let mut in_daa = vec![false; n_cells];
    let mut in_ufaa = vec![false; n_cells];
    for (spec, &c) in config.centers.iter().zip(&centers) {
        let nearest = (0..n_cells)
            .min_by(|&a, &b| dist(positions[a], c).total_cmp(&dist(positions[b], c)))
            .expect("non-empty grid");
        in_daa[nearest] = true;
        in_ufaa[nearest] = true;
        for i in 0..n_cells {
            let d = dist(positions[i], c);
            in_daa[i] |= d <= spec.daa_radius_m.max(spec.ufaa_radius_m);
            in_ufaa[i] |= d <= spec.ufaa_radius_m;
        }
    }

    let main = centers[0];
    let mut cells = Vec::with_capacity(n_cells);
    for i in 0..n_cells {
        let p = positions[i];
        let d = dist(p, main);
        let mut building = 0.55 * (-d / 2500.0).exp() + 0.05 + rng.random_range(-0.03..0.03);
        let mut forest = 0.5 * (1.0 - (-d / 4000.0).exp()) + rng.random_range(-0.1..0.1);
        let mut agricultural =
            0.35 * (-((d - 3500.0) / 2500.0).powi(2)).exp() + rng.random_range(0.0..0.1);
        let mut freshwater = rng.random_range(0.0..0.05);
        let mut industrial = rng.random_range(0.0..0.08);
        for s in [&mut building, &mut forest, &mut agricultural] {
            *s = s.clamp(0.0, 1.0);
        }
        let total = building + forest + agricultural + freshwater + industrial;
        if total > 0.98 {
            let k = 0.98 / total;
            for s in [
                &mut building,
                &mut forest,
                &mut agricultural,
                &mut freshwater,
                &mut industrial,
            ] {
                *s *= k;
            }
        }
        let city = if d > config.city_radius_m {
            City::Other
        } else {
            let angle = (p.1 - main.1).atan2(p.0 - main.0) + std::f64::consts::PI;
            let sector = ((angle / (2.0 * std::f64::consts::PI) * 5.0).floor() as usize).min(4);
            City::NAMED[sector]
        };
        let tertiary: f64 = config
            .centers
            .iter()
            .zip(&centers)
            .map(|(spec, &c)| {
                spec.strength
                    * config.tertiary_peak
                    * (-dist(p, c) / config.employment_decay_m).exp()
            })
            .sum::<f64>()
            * rng.random_range(0.8..1.2)
            + 0.02;
        let primary_secondary = 0.2 + 3.0 * industrial + rng.random_range(0.0..0.3);
        cells.push(MeshCell {
            id: i as CellId,
            x: p.0,
            y: p.1,
            land_price: 0.0,
            housing_stock: 0,
            share_building: building,
            share_agricultural: agricultural,
            share_freshwater: freshwater,
            share_forest: forest,
            share_industrial: industrial,
            city,
            employees_primary_secondary: primary_secondary,
            employees_tertiary: tertiary,
            in_daa: in_daa[i],
            in_ufaa: in_ufaa[i],
            logsum_work: 0.0,
            logsum_education: 0.0,
            logsum_other: 0.0,
        });
    }

    allocate_housing_stock(&mut cells, n_households, config.stock_per_household);

    let edges = grid_edges(&positions, side);
    let graph = super::Graph::undirected(
        n_cells,
        edges
            .iter()
            .map(|e| (e.from_cell as usize, e.to_cell as usize, e.length_m)),
    )?;
    let times = TravelTimes::from_distances(n_cells, &graph.all_pairs(), travel)?;
    let logsums = tour_logsums(&times, &Employment::from_cells(&cells), logsum)?;
    let hedonic = HedonicCoefficients::preset();
    let noise = Normal::new(0.0, config.price_noise_sd.max(0.0))
        .map_err(|e| Error::Config(format!("price noise: {e}")))?;
    for (i, c) in cells.iter_mut().enumerate() {
        c.logsum_work = logsums.work[i];
        c.logsum_education = logsums.education[i];
        c.logsum_other = logsums.other[i];
        c.land_price = predict_land_price(&hedonic, &crate::hedonic::covariates(c))
            * noise.sample(&mut rng).exp();
    }

    let households = generate_households(&cells, n_households, &mut rng)?;
    Region::new(cells, households, edges)
}

fn allocate_housing_stock(cells: &mut [MeshCell], n_households: usize, per_household: f64) {
    let weights: Vec<f64> = cells.iter().map(|c| c.share_building + 0.05).collect();
    let total_w: f64 = weights.iter().sum();
    let target = (n_households as f64 * per_household.max(1.0)).ceil();
    for (c, w) in cells.iter_mut().zip(&weights) {
        c.housing_stock = ((target * w / total_w).floor() as u32).max(1);
    }
    let sum: u64 = cells.iter().map(|c| c.housing_stock as u64).sum();
    if sum < n_households as u64 {
        let densest = (0..cells.len())
            .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
            .expect("non-empty");
        cells[densest].housing_stock += (n_households as u64 - sum) as u32;
    }
}

/// Queen-contiguity links on the (possibly ragged) grid.
fn grid_edges(positions: &[(f64, f64)], side: usize) -> Vec<Edge> {
    let n = positions.len();
    let at = |row: usize, col: usize| {
        let i = row * side + col;
        (col < side && i < n).then_some(i)
    };
    let mut edges = Vec::new();
    for i in 0..n {
        let (row, col) = (i / side, i % side);
        let mut neighbours = vec![at(row, col + 1), at(row + 1, col), at(row + 1, col + 1)];
        if col > 0 {
            neighbours.push(at(row + 1, col - 1));
        }
        for j in neighbours.into_iter().flatten() {
            let (a, b) = (positions[i], positions[j]);
            edges.push(Edge {
                from_cell: i as CellId,
                to_cell: j as CellId,
                length_m: ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt(),
            });
        }
    }
    edges
}

fn generate_households(
    cells: &[MeshCell],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Household>> {
    let stock = WeightedIndex::new(cells.iter().map(|c| c.housing_stock as f64))
        .map_err(|e| Error::Data(format!("housing stock weights: {e}")))?;
    let size_dist =
        WeightedIndex::new([0.27, 0.30, 0.18, 0.15, 0.07, 0.03]).expect("static weights");
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let age_of_head: u32 = rng.random_range(20..=94);
        let n_members = size_dist.sample(rng) as u32 + 1;
        let (mut workers, mut students, mut unemployed) = (0, 0, 0);
        let head_works = if age_of_head < 65 { 0.85 } else { 0.2 };
        if rng.random_bool(head_works) {
            workers += 1;
        } else {
            unemployed += 1;
        }
        for _ in 1..n_members {
            let u: f64 = rng.random();
            if age_of_head <= 50 {
                match u {
                    u if u < 0.15 => {} // child under six
                    u if u < 0.50 => students += 1,
                    u if u < 0.80 => workers += 1,
                    _ => unemployed += 1,
                }
            } else {
                match u {
                    u if u < 0.15 => students += 1,
                    u if u < 0.55 => workers += 1,
                    _ => unemployed += 1,
                }
            }
        }
        let home = stock.sample(rng);
        out.push(Household {
            id: id as u32,
            home_cell: cells[home].id,
            age_of_head,
            n_workers: workers,
            n_students: students,
            n_unemployed: unemployed,
            n_members,
            segment: assign_segment(age_of_head, n_members)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_synthetic_region(100, 500, 1).unwrap();
        let b = generate_synthetic_region(100, 500, 1).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert_eq!(a.households(), b.households());
        assert_eq!(a.edges(), b.edges());
        let c = generate_synthetic_region(100, 500, 2).unwrap();
        assert_ne!(a.cells(), c.cells());
    }

    #[test]
    fn smallest_region_is_consistent() {
        let r = generate_synthetic_region(4, 1, 7).unwrap();
        assert_eq!(r.n_cells(), 4);
        let h = &r.households()[0];
        assert!(r.index_of(h.home_cell).is_some());
        assert!(!r.daa_cells().is_empty());
        assert!(!r.ufaa_cells().is_empty());
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            generate_synthetic_region(3, 10, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            generate_synthetic_region(16, 0, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stock_covers_households_and_cells_validate() {
        let r = generate_synthetic_region(100, 5000, 1).unwrap();
        let stock: u64 = r.cells().iter().map(|c| c.housing_stock as u64).sum();
        assert!(stock >= 5000);
        for c in r.cells() {
            c.validate().unwrap();
            assert!(c.housing_stock > 0);
        }
        for h in r.households() {
            h.validate().unwrap();
        }
    }

    #[test]
    fn ragged_grid_is_connected() {
        let r = generate_synthetic_region(10, 5, 3).unwrap();
        let d = r.graph().distances_from(&[0]);
        assert!(d.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn land_price_falls_with_distance_from_centre() {
        let r = generate_synthetic_region(100, 100, 1).unwrap();
        let extent = 10_000.0;
        let pts: Vec<(f64, f64)> = r
            .cells()
            .iter()
            .map(|c| {
                let d = ((c.x - extent / 2.0).powi(2) + (c.y - extent / 2.0).powi(2)).sqrt();
                (d, c.land_price.ln())
            })
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        assert!(cov < 0.0);
        let centre = r.cells().iter().find(|c| c.in_ufaa).unwrap().land_price;
        let corner = r.cells()[0].land_price;
        assert!(centre > corner);
    }

    #[test]
    fn every_named_city_present() {
        let r = generate_synthetic_region(100, 10, 1).unwrap();
        for city in City::NAMED.iter().chain([City::Other].iter()) {
            assert!(
                r.cells().iter().any(|c| c.city == *city),
                "{city:?} missing"
            );
        }
    }
}
