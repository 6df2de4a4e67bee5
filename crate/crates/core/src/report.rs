//! Price statistics and the split of price dispersion into congestion-based
//! (across nodes) and time-based (across hours) parts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clearing::Granularity;
use crate::grid::ZoneMap;
use crate::pricing::PriceSurface;

pub const DEFAULT_PRICE_CAP: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("price series is empty")]
    Empty,
    #[error("variance decomposition needs nodal prices, got {0}")]
    NotNodal(Granularity),
    #[error("zone map does not match the price surface")]
    ZoneMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceStats {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Number of prices above the cap.
    pub outliers: usize,
    pub count: usize,
}

/// Statistics over `prices` after capping each value at `cap`.
pub fn price_stats(prices: &[f64], cap: f64) -> Result<PriceStats, ReportError> {
    if prices.is_empty() {
        return Err(ReportError::Empty);
    }
    let outliers = prices.iter().filter(|&&p| p > cap).count();
    let mut capped: Vec<f64> = prices.iter().map(|&p| p.min(cap)).collect();
    capped.sort_by(f64::total_cmp);
    let n = capped.len();
    let mean = capped.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        capped[n / 2]
    } else {
        0.5 * (capped[n / 2 - 1] + capped[n / 2])
    };
    Ok(PriceStats {
        mean,
        median,
        std: population_std(&capped),
        outliers,
        count: n,
    })
}

/// Statistics over every node-hour of a surface (zonal and national prices
/// are repeated for each member node).
pub fn surface_stats(surface: &PriceSurface, cap: f64) -> Result<PriceStats, ReportError> {
    let values: Vec<f64> = surface.per_node().into_iter().flatten().collect();
    price_stats(&values, cap)
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneDispersion {
    pub zone: String,
    /// Mean over hours of the across-member-node standard deviation.
    pub congestion: f64,
    /// Mean over member nodes of their across-hour standard deviation.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    /// Standard deviation across nodes, per hour.
    pub congestion: Vec<f64>,
    /// Standard deviation across hours, per node.
    pub time: Vec<f64>,
    pub zones: Vec<ZoneDispersion>,
}

impl VarianceDecomposition {
    pub fn mean_congestion(&self) -> f64 {
        mean(&self.congestion)
    }

    pub fn mean_time(&self) -> f64 {
        mean(&self.time)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Splits nodal price dispersion into per-hour and per-node standard
/// deviations, with zone-grouped means when `zones` is given.
pub fn variance_decomposition(
    surface: &PriceSurface,
    zones: Option<&ZoneMap>,
) -> Result<VarianceDecomposition, ReportError> {
    if surface.granularity != Granularity::Nodal {
        return Err(ReportError::NotNodal(surface.granularity));
    }
    let prices = surface.per_node();
    if prices.is_empty() || surface.hours() == 0 {
        return Err(ReportError::Empty);
    }
    let hours = surface.hours();
    let column = |t: usize, members: &[usize]| -> Vec<f64> { members.iter().map(|&n| prices[n][t]).collect() };
    let all: Vec<usize> = (0..prices.len()).collect();
    let congestion: Vec<f64> = (0..hours).map(|t| population_std(&column(t, &all))).collect();
    let time: Vec<f64> = prices.iter().map(|row| population_std(row)).collect();

    let mut zone_rows = Vec::new();
    if let Some(zones) = zones {
        if zones.node_count() != prices.len() {
            return Err(ReportError::ZoneMismatch);
        }
        for (z, id) in zones.zone_ids().iter().enumerate() {
            let members = zones.members(z);
            let per_hour: Vec<f64> = (0..hours).map(|t| population_std(&column(t, &members))).collect();
            let per_node: Vec<f64> = members.iter().map(|&n| time[n]).collect();
            zone_rows.push(ZoneDispersion {
                zone: id.clone(),
                congestion: mean(&per_hour),
                time: mean(&per_node),
            });
        }
    }
    Ok(VarianceDecomposition {
        congestion,
        time,
        zones: zone_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::clear_nodal;
    use crate::fixtures;
    use crate::pricing::{ip_prices, PricingRule};

    fn nodal_surface(prices: Vec<Vec<f64>>) -> PriceSurface {
        let n = prices.len();
        PriceSurface {
            granularity: Granularity::Nodal,
            rule: PricingRule::Ip,
            locations: (0..n).map(|i| format!("v{i}")).collect(),
            node_location: (0..n).collect(),
            prices,
        }
    }

    #[test]
    fn two_point_stats() {
        let s = price_stats(&[10.0, 30.0], 100.0).unwrap();
        assert_eq!((s.mean, s.median, s.std, s.outliers), (20.0, 20.0, 10.0, 0));
        let s = price_stats(&[50.0, 150.0], 100.0).unwrap();
        assert_eq!((s.mean, s.outliers), (75.0, 1));
        assert_eq!(price_stats(&[], 100.0), Err(ReportError::Empty));
        assert_eq!(price_stats(&[3.0, 1.0, 2.0], 100.0).unwrap().median, 2.0);
    }

    #[test]
    fn stats_ignore_order() {
        let a = price_stats(&[5.0, 120.0, 40.0, 7.5], 100.0).unwrap();
        let b = price_stats(&[40.0, 7.5, 120.0, 5.0], 100.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_arithmetic() {
        let d = variance_decomposition(&nodal_surface(vec![vec![10.0, 20.0], vec![30.0, 20.0]]), None).unwrap();
        assert_eq!(d.congestion, vec![10.0, 0.0]);
        assert_eq!(d.time, vec![5.0, 5.0]);

        let d = variance_decomposition(&nodal_surface(vec![vec![7.0; 3]; 4]), None).unwrap();
        assert!(d.congestion.iter().chain(&d.time).all(|&v| v == 0.0));
    }

    #[test]
    fn two_node_congestion_signal() {
        let inst = fixtures::ex_2n();
        let ip = ip_prices(&inst, &clear_nodal(&inst, 0.0).unwrap()).unwrap();
        let d = variance_decomposition(&ip, Some(&inst.zones)).unwrap();
        assert!((d.congestion[0] - 10.0).abs() < 1e-9);
        assert_eq!(d.time, vec![0.0, 0.0]);
        assert!((d.zones[0].congestion - 10.0).abs() < 1e-9);

        let wide = fixtures::ex_2n_with_limit(80.0);
        let ip = ip_prices(&wide, &clear_nodal(&wide, 0.0).unwrap()).unwrap();
        let d = variance_decomposition(&ip, None).unwrap();
        assert!(d.congestion[0].abs() < 1e-9);
    }

    #[test]
    fn zonal_surface_rejected() {
        let mut s = nodal_surface(vec![vec![1.0]]);
        s.granularity = Granularity::Zonal;
        assert_eq!(
            variance_decomposition(&s, None),
            Err(ReportError::NotNodal(Granularity::Zonal))
        );
    }
}
