use std::fmt::Write as _;

use num_rational::Ratio;

use super::{DelaySummary, Distribution, SurveyError};

pub const REPORT_HEADER: &str = "sugarchain-survey-report v1";

/// Render a fraction as a percentage. Terminating decimals are printed
/// exactly with trailing zeros dropped (`37/40` -> `92.5%`); anything else is
/// rounded half-up to four decimals and prefixed with `~`.
pub fn format_percent(f: Ratio<u64>) -> String {
    let pct = f * Ratio::from_integer(100u64);
    let mut den = *pct.denom();
    for p in [2, 5] {
        while den.is_multiple_of(p) {
            den /= p;
        }
    }
    let (approx, value, digits) = if den == 1 {
        let mut digits = 0u32;
        while *(pct * Ratio::from_integer(10u64.pow(digits))).denom() != 1 {
            digits += 1;
        }
        let v = (pct * Ratio::from_integer(10u64.pow(digits))).to_integer();
        (false, v, digits)
    } else {
        let s = pct * Ratio::from_integer(10_000u64);
        (true, (s + Ratio::new(1, 2)).floor().to_integer(), 4)
    };
    let unit = 10u64.pow(digits);
    let mut out = String::new();
    if approx {
        out.push('~');
    }
    write!(out, "{}", value / unit).unwrap();
    let mut frac = format!("{:0width$}", value % unit, width = digits as usize);
    while frac.ends_with('0') {
        frac.pop();
    }
    if !frac.is_empty() {
        write!(out, ".{frac}").unwrap();
    }
    out.push('%');
    out
}

/// Text report: a version line, then one block per question in the given
/// order, each option on its own line as `<option> <count>/<n> <percent>`.
pub fn export_report(
    distributions: &[Distribution],
    delay: Option<&DelaySummary>,
) -> Result<String, SurveyError> {
    if distributions.is_empty() {
        return Err(SurveyError::NothingToReport);
    }
    let mut out = String::new();
    writeln!(out, "{REPORT_HEADER}").unwrap();
    writeln!(out, "records {}", distributions[0].n).unwrap();
    for d in distributions {
        writeln!(out).unwrap();
        writeln!(out, "{} {}", d.question, d.question.title()).unwrap();
        for o in &d.options {
            writeln!(
                out,
                "  {} {}/{} {}",
                o.option,
                o.count,
                d.n,
                format_percent(o.fraction)
            )
            .unwrap();
        }
    }
    if let Some(s) = delay {
        writeln!(out).unwrap();
        let days = |d: Option<u32>| d.map_or_else(|| "-".to_owned(), |v| v.to_string());
        writeln!(
            out,
            "payment_delay delayed {} min_days {} max_days {}",
            format_percent(s.fraction_delayed),
            days(s.min_delay_days),
            days(s.max_delay_days)
        )
        .unwrap();
    }
    Ok(out)
}
