//! Report assembly and emission.
//!
//! Every run produces one `Report`: a fixed-header CSV (the machine
//! contract) and a human-readable summary containing the configuration
//! echo. Error intervals are binomial 95% intervals under the normal
//! approximation, clamped to [0, 1].

use crate::config::Mode;

/// Versioned CSV header; one row per decoder (or per block length in sweep
/// mode, where `rate_sym` carries the polarized fraction).
pub const CSV_HEADER: &str =
    "mode,q,N,t,K,rule,delta,trials,seed,decoder,err_rate,err_lo,err_hi,rate_sym,elapsed_ms";

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub decoder: usize,
    pub trials: usize,
    pub errors: usize,
    pub err_rate: f64,
    pub err_lo: f64,
    pub err_hi: f64,
    /// Payload symbols per source symbol (polarized fraction in sweep mode).
    pub rate_sym: f64,
    pub payload_symbols: usize,
    pub source_symbols: usize,
}

impl ReportRow {
    /// A row whose error rate is estimated from trials.
    pub fn from_trials(
        n: usize,
        decoder: usize,
        trials: usize,
        errors: usize,
        payload_symbols: usize,
        source_symbols: usize,
    ) -> ReportRow {
        assert!(errors <= trials, "error count exceeds trials");
        let (err_rate, err_lo, err_hi) = binomial_interval(errors, trials);
        ReportRow {
            n,
            decoder,
            trials,
            errors,
            err_rate,
            err_lo,
            err_hi,
            rate_sym: exact_rate(payload_symbols, source_symbols),
            payload_symbols,
            source_symbols,
        }
    }

    /// A row reporting a computed quantity rather than a trial estimate;
    /// the interval degenerates to the value itself.
    pub fn from_value(
        n: usize,
        decoder: usize,
        value: f64,
        payload_symbols: usize,
        source_symbols: usize,
    ) -> ReportRow {
        ReportRow {
            n,
            decoder,
            trials: 0,
            errors: 0,
            err_rate: value,
            err_lo: value,
            err_hi: value,
            rate_sym: exact_rate(payload_symbols, source_symbols),
            payload_symbols,
            source_symbols,
        }
    }
}

fn exact_rate(payload_symbols: usize, source_symbols: usize) -> f64 {
    assert!(source_symbols > 0, "source length must be positive");
    payload_symbols as f64 / source_symbols as f64
}

/// 95% binomial interval by the normal approximation, clamped to [0, 1].
pub fn binomial_interval(errors: usize, trials: usize) -> (f64, f64, f64) {
    if trials == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = errors as f64 / trials as f64;
    let half = 1.96 * (p * (1.0 - p) / trials as f64).sqrt();
    (p, (p - half).max(0.0), (p + half).min(1.0))
}

#[derive(Debug, Clone)]
pub struct Report {
    pub mode: Mode,
    pub q: u32,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub rule: String,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    /// Free-form accounting lines: construction margins, wire sizes,
    /// covering slack.
    pub margins: Vec<String>,
    pub config_echo: String,
    pub elapsed_ms: u128,
}

impl Report {
    /// The CSV document: fixed header plus one row per entry. Identical
    /// configuration and seed reproduce every column except `elapsed_ms`.
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.mode.name(),
                self.q,
                row.n,
                self.t,
                self.k,
                self.rule,
                self.delta,
                row.trials,
                self.seed,
                row.decoder,
                row.err_rate,
                row.err_lo,
                row.err_hi,
                row.rate_sym,
                self.elapsed_ms,
            ));
        }
        out
    }

    /// The human-readable summary, ending with the configuration echo.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "mode {} | field order {} | N {} | t {} | K {} | rule {} | delta {} | seed {}\n",
            self.mode.name(),
            self.q,
            self.n,
            self.t,
            self.k,
            self.rule,
            self.delta,
            self.seed,
        ));
        for row in &self.rows {
            if row.trials > 0 {
                out.push_str(&format!(
                    "decoder {} @ N {}: {}/{} blocks wrong, err {:.6} [{:.6}, {:.6}], \
                     rate {:.6} sym/sym ({} of {} symbols)\n",
                    row.decoder,
                    row.n,
                    row.errors,
                    row.trials,
                    row.err_rate,
                    row.err_lo,
                    row.err_hi,
                    row.rate_sym,
                    row.payload_symbols,
                    row.source_symbols,
                ));
            } else {
                out.push_str(&format!(
                    "decoder {} @ N {}: value {:.6}, rate {:.6} sym/sym ({} of {} symbols)\n",
                    row.decoder, row.n, row.err_rate, row.rate_sym, row.payload_symbols,
                    row.source_symbols,
                ));
            }
        }
        for line in &self.margins {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(
            "error intervals: binomial 95% via the normal approximation, clamped to [0, 1]\n",
        );
        out.push_str(&format!("elapsed {} ms\n", self.elapsed_ms));
        out.push_str("-- config --\n");
        out.push_str(&self.config_echo);
        out
    }
}
