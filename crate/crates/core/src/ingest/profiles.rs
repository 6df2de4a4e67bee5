use crate::market::DemandSeries;

use super::IngestError;

/// Splits a national load profile over nodes in proportion to their base
/// loads. Shares are constant over the horizon; buyers are named `load_<node>`.
pub fn disaggregate_demand(
    national_profile: &[f64],
    base_loads: &[(String, f64)],
) -> Result<Vec<DemandSeries>, IngestError> {
    if base_loads.iter().any(|(_, b)| !(b.is_finite() && *b >= 0.0)) {
        return Err(IngestError::Invalid("base loads must be finite and non-negative".into()));
    }
    let total: f64 = base_loads.iter().map(|(_, b)| b).sum();
    if total <= 0.0 {
        return Err(IngestError::Invalid("base loads sum to zero".into()));
    }
    Ok(base_loads
        .iter()
        .map(|(node, base)| {
            let share = base / total;
            DemandSeries {
                buyer_id: format!("load_{node}"),
                node_id: node.clone(),
                profile: national_profile.iter().map(|d| d * share).collect(),
            }
        })
        .collect())
}

/// Hourly maximum output per unit of a renewable fleet, proportional to
/// nominal capacity: `result[unit][hour]`.
pub fn scale_renewables(aggregate: &[f64], capacities: &[f64]) -> Result<Vec<Vec<f64>>, IngestError> {
    if capacities.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(IngestError::Invalid("capacities must be finite and non-negative".into()));
    }
    let total: f64 = capacities.iter().sum();
    if total <= 0.0 {
        return Err(IngestError::Invalid("fleet capacity is zero".into()));
    }
    for (t, &a) in aggregate.iter().enumerate() {
        if !(a >= 0.0) {
            return Err(IngestError::Invalid(format!("hour {t}: negative aggregate output {a}")));
        }
        if a > total * (1.0 + 1e-12) {
            return Err(IngestError::Invalid(format!(
                "hour {t}: aggregate output {a} MWh exceeds fleet capacity {total} MW"
            )));
        }
    }
    Ok(capacities
        .iter()
        .map(|&c| aggregate.iter().map(|&a| (a * c / total).min(c)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loads(v: &[(&str, f64)]) -> Vec<(String, f64)> {
        v.iter().map(|(n, b)| (n.to_string(), *b)).collect()
    }

    #[test]
    fn proportional_split() {
        let d = disaggregate_demand(&[100.0], &loads(&[("a", 1.0), ("b", 3.0)])).unwrap();
        assert_eq!(d[0].profile, vec![25.0]);
        assert_eq!(d[1].profile, vec![75.0]);
        assert_eq!(d[1].buyer_id, "load_b");

        let d = disaggregate_demand(&[100.0, 200.0], &loads(&[("a", 2.0), ("b", 2.0)])).unwrap();
        assert_eq!(d[0].profile, vec![50.0, 100.0]);
        assert_eq!(d[1].profile, vec![50.0, 100.0]);

        let d = disaggregate_demand(&[42.0, 7.0], &loads(&[("only", 5.0)])).unwrap();
        assert_eq!(d[0].profile, vec![42.0, 7.0]);
    }

    #[test]
    fn zero_base_loads_rejected() {
        assert!(disaggregate_demand(&[1.0], &loads(&[("a", 0.0)])).is_err());
    }

    #[test]
    fn renewable_split() {
        let r = scale_renewables(&[50.0], &[100.0, 300.0]).unwrap();
        assert_eq!(r, vec![vec![12.5], vec![37.5]]);
        let r = scale_renewables(&[0.0], &[100.0, 300.0]).unwrap();
        assert_eq!(r, vec![vec![0.0], vec![0.0]]);
        let r = scale_renewables(&[400.0], &[100.0, 300.0]).unwrap();
        assert_eq!(r, vec![vec![100.0], vec![300.0]]);
        assert!(scale_renewables(&[10.0, 401.0], &[100.0, 300.0]).is_err());
    }
}
