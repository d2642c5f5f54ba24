//! Run reports and their CSV rendering. Output is fully deterministic:
//! metrics appear in insertion order and floats are printed with 12
//! significant digits.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Exact,
    Estimated,
}

#[derive(Debug, Clone)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub kind: MetricKind,
    /// 95% Wilson interval for estimated proportions.
    pub ci: Option<(f64, f64)>,
}

/// Per-run record: a config echo sufficient to reproduce the run, the seed,
/// a code-version tag, and the measured metrics.
#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub version: String,
    pub metrics: Vec<Metric>,
}

impl SimulationReport {
    pub fn new(seed: u64) -> SimulationReport {
        SimulationReport {
            config: Vec::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            metrics: Vec::new(),
        }
    }

    pub fn config_entry(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn exact(&mut self, name: &str, value: f64) {
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
            kind: MetricKind::Exact,
            ci: None,
        });
    }

    pub fn estimated(&mut self, name: &str, value: f64, ci: Option<(f64, f64)>) {
        self.metrics.push(Metric {
            name: name.to_string(),
            value,
            kind: MetricKind::Estimated,
            ci,
        });
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# version = {}\n", self.version));
        out.push_str(&format!("# seed = {}\n", self.seed));
        for (k, v) in &self.config {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out.push_str("metric,value,kind,ci_low,ci_high\n");
        for m in &self.metrics {
            let kind = match m.kind {
                MetricKind::Exact => "exact",
                MetricKind::Estimated => "estimated",
            };
            let (lo, hi) = match m.ci {
                Some((lo, hi)) => (fmt_sig(lo), fmt_sig(hi)),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!("{},{},{kind},{lo},{hi}\n", m.name, fmt_sig(m.value)));
        }
        out
    }
}

/// 12-significant-digit decimal rendering, stable across platforms.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.11e}");
    // prefer plain decimal when the exponent is small
    let exp: i32 = s[s.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..12).contains(&exp) {
        let digits = 11 - exp;
        let plain = format!("{x:.*}", digits.max(0) as usize);
        let trimmed = plain.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        s
    }
}

/// Wilson score interval for a binomial proportion at confidence level z
/// (z = 1.96 for 95%).
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_basics() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!((lo + hi - 1.0).abs() < 1e-12); // symmetric at p = 1/2
        let (lo, hi) = wilson_interval(100, 100, 1.96);
        assert!(lo > 0.95);
        assert!(hi > 1.0 - 1e-12);
    }

    #[test]
    fn sig_digit_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.412295305641), "0.412295305641");
        assert!(fmt_sig(1e-30).contains('e'));
        // 12 significant digits, not more
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
    }

    #[test]
    fn csv_shape_and_determinism() {
        let mut r = SimulationReport::new(7);
        r.config_entry("n", 6);
        r.exact("p_err", 0.125);
        r.estimated("agree", 0.93, Some((0.9, 0.95)));
        let a = r.to_csv();
        let b = r.to_csv();
        assert_eq!(a, b);
        assert!(a.contains("# seed = 7"));
        assert!(a.contains("# n = 6"));
        assert!(a.contains("p_err,0.125,exact,,"));
        assert!(a.contains("agree,0.93,estimated,0.9,0.95"));
    }
}
