//! The 15-question farmer questionnaire: loading, validation and exact
//! per-question tabulation.
//!
//! Answers are lowercase tokens:
//!
//! | column | tokens |
//! |---|---|
//! | q1 | `y1_5`, `y6_10`, `gt10` |
//! | q2 | `yes`, `no` or `no:<major crop>` |
//! | q3 | harvest months, integer 8..=11 |
//! | q4, q6, q10, q11, q13, q14 | `yes`, `no`, `dont_know` |
//! | q5 | purchase rate in paise per kg, integer 300..=1200 |
//! | q7 | `instant` or `after:<days>` |
//! | q8 | `stated:<problem>` or `none` |
//! | q9 | `must_find`, `easy_sell`, `dont_know` |
//! | q12 | `farmer`, `government`, `others` |
//! | q15 | `gov_office`, `private_shop`, `others` |

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

pub use report::{export_report, format_percent, REPORT_HEADER};

/// The bundled synthetic fixture: 40 rows built so every per-question
/// marginal matches the published case-study percentages. Row-level
/// combinations across questions are arbitrary.
pub const FIXTURE_CSV: &str = include_str!("../../fixtures/survey_40.csv");

pub const HARVEST_MONTHS: std::ops::RangeInclusive<u8> = 8..=11;
pub const RATE_PAISE: std::ops::RangeInclusive<u32> = 300..=1200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SurveyError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("bad value {value:?} in row {row}, column {column}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("survey file has no records")]
    EmptyFile,
    #[error("no records to tabulate")]
    EmptyInput,
    #[error("no distributions to report")]
    NothingToReport,
    #[error("i/o error: {0}")]
    Io(String),
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const OPTIONS: &'static [&'static str] = &[$($token),+];

            pub fn token(self) -> &'static str {
                match self { $($name::$variant => $token),+ }
            }
        }

        impl FromStr for $name {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, ()> {
                match s { $($token => Ok($name::$variant),)+ _ => Err(()) }
            }
        }
    };
}

token_enum!(YearsFarming { OneToFive => "y1_5", SixToTen => "y6_10", OverTen => "gt10" });
token_enum!(YesNoUnsure { Yes => "yes", No => "no", DontKnow => "dont_know" });
token_enum!(BuyerSituation { MustFind => "must_find", EasySell => "easy_sell", DontKnow => "dont_know" });
token_enum!(Transport { Farmer => "farmer", Government => "government", Others => "others" });
token_enum!(SeedSource { GovOffice => "gov_office", PrivateShop => "private_shop", Others => "others" });

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MajorFarm {
    Yes,
    No { other_crop: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PaymentTiming {
    Instant,
    After { days: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MajorProblem {
    Stated(String),
    None,
}

/// One farmer's questionnaire answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurveyRecord {
    pub farmer_id: String,
    pub q1_years: YearsFarming,
    pub q2_major: MajorFarm,
    pub q3_harvest_months: u8,
    pub q4_cost_recovered: YesNoUnsure,
    pub q5_rate_paise_per_kg: u32,
    pub q6_worms: YesNoUnsure,
    pub q7_payment: PaymentTiming,
    pub q8_major_problem: MajorProblem,
    pub q9_buyer: BuyerSituation,
    pub q10_weather: YesNoUnsure,
    pub q11_inputs_easy: YesNoUnsure,
    pub q12_transport: Transport,
    pub q13_wild_animals: YesNoUnsure,
    pub q14_other_problems: YesNoUnsure,
    pub q15_seed_source: SeedSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum QuestionId {
    Q1 = 1,
    Q2,
    Q3,
    Q4,
    Q5,
    Q6,
    Q7,
    Q8,
    Q9,
    Q10,
    Q11,
    Q12,
    Q13,
    Q14,
    Q15,
}

impl QuestionId {
    pub const ALL: [QuestionId; 15] = [
        QuestionId::Q1,
        QuestionId::Q2,
        QuestionId::Q3,
        QuestionId::Q4,
        QuestionId::Q5,
        QuestionId::Q6,
        QuestionId::Q7,
        QuestionId::Q8,
        QuestionId::Q9,
        QuestionId::Q10,
        QuestionId::Q11,
        QuestionId::Q12,
        QuestionId::Q13,
        QuestionId::Q14,
        QuestionId::Q15,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn column(self) -> String {
        format!("q{}", self.number())
    }

    pub fn title(self) -> &'static str {
        match self {
            QuestionId::Q1 => "years of sugarcane farming",
            QuestionId::Q2 => "sugarcane is the major farm",
            QuestionId::Q3 => "months to harvest",
            QuestionId::Q4 => "production cost recovered at government price",
            QuestionId::Q5 => "mill purchase rate (paise/kg)",
            QuestionId::Q6 => "crop affected by worms/viruses",
            QuestionId::Q7 => "payment timing",
            QuestionId::Q8 => "can name one major problem",
            QuestionId::Q9 => "finding a buyer",
            QuestionId::Q10 => "weather affects farming",
            QuestionId::Q11 => "fertilizer and seeds easily available",
            QuestionId::Q12 => "how cane reaches the factory",
            QuestionId::Q13 => "impact of wild animals",
            QuestionId::Q14 => "other problems faced",
            QuestionId::Q15 => "seed source",
        }
    }

    /// Fixed option order for categorical questions; `None` for the numeric
    /// ones (q3, q5), whose options are the observed values in ascending order.
    fn fixed_options(self) -> Option<&'static [&'static str]> {
        match self {
            QuestionId::Q1 => Some(YearsFarming::OPTIONS),
            QuestionId::Q2 => Some(&["yes", "no"]),
            QuestionId::Q3 => Some(&["8", "9", "10", "11"]),
            QuestionId::Q5 => None,
            QuestionId::Q7 => Some(&["instant", "after"]),
            QuestionId::Q8 => Some(&["stated", "none"]),
            QuestionId::Q9 => Some(BuyerSituation::OPTIONS),
            QuestionId::Q12 => Some(Transport::OPTIONS),
            QuestionId::Q15 => Some(SeedSource::OPTIONS),
            _ => Some(YesNoUnsure::OPTIONS),
        }
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.number())
    }
}

impl FromStr for QuestionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: usize = s
            .trim()
            .trim_start_matches(['q', 'Q'])
            .parse()
            .map_err(|_| format!("unknown question {s:?}"))?;
        QuestionId::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| format!("unknown question {s:?}"))
    }
}

impl SurveyRecord {
    /// The option label this record falls under for `q`.
    pub fn answer_label(&self, q: QuestionId) -> String {
        match q {
            QuestionId::Q1 => self.q1_years.token().into(),
            QuestionId::Q2 => match self.q2_major {
                MajorFarm::Yes => "yes".into(),
                MajorFarm::No { .. } => "no".into(),
            },
            QuestionId::Q3 => self.q3_harvest_months.to_string(),
            QuestionId::Q4 => self.q4_cost_recovered.token().into(),
            QuestionId::Q5 => self.q5_rate_paise_per_kg.to_string(),
            QuestionId::Q6 => self.q6_worms.token().into(),
            QuestionId::Q7 => match self.q7_payment {
                PaymentTiming::Instant => "instant".into(),
                PaymentTiming::After { .. } => "after".into(),
            },
            QuestionId::Q8 => match self.q8_major_problem {
                MajorProblem::Stated(_) => "stated".into(),
                MajorProblem::None => "none".into(),
            },
            QuestionId::Q9 => self.q9_buyer.token().into(),
            QuestionId::Q10 => self.q10_weather.token().into(),
            QuestionId::Q11 => self.q11_inputs_easy.token().into(),
            QuestionId::Q12 => self.q12_transport.token().into(),
            QuestionId::Q13 => self.q13_wild_animals.token().into(),
            QuestionId::Q14 => self.q14_other_problems.token().into(),
            QuestionId::Q15 => self.q15_seed_source.token().into(),
        }
    }
}

struct RowReader<'a> {
    row: usize,
    fields: &'a BTreeMap<String, String>,
}

impl RowReader<'_> {
    fn raw(&self, column: &str) -> &str {
        self.fields.get(column).map(String::as_str).unwrap_or("")
    }

    fn bad(&self, column: &str) -> SurveyError {
        SurveyError::BadValue {
            row: self.row,
            column: column.to_owned(),
            value: self.raw(column).to_owned(),
        }
    }

    fn token<T: FromStr>(&self, column: &str) -> Result<T, SurveyError> {
        self.raw(column).parse().map_err(|_| self.bad(column))
    }

    fn ranged<T>(&self, column: &str, range: std::ops::RangeInclusive<T>) -> Result<T, SurveyError>
    where
        T: FromStr + PartialOrd,
    {
        let v: T = self.token(column)?;
        if range.contains(&v) {
            Ok(v)
        } else {
            Err(self.bad(column))
        }
    }

    fn record(&self) -> Result<SurveyRecord, SurveyError> {
        let farmer_id = self.raw("farmer_id").to_owned();
        if farmer_id.is_empty() {
            return Err(self.bad("farmer_id"));
        }
        let q2_major = match self.raw("q2") {
            "yes" => MajorFarm::Yes,
            "no" => MajorFarm::No { other_crop: None },
            s => match s.strip_prefix("no:") {
                Some(crop) if !crop.trim().is_empty() => MajorFarm::No {
                    other_crop: Some(crop.trim().to_owned()),
                },
                _ => return Err(self.bad("q2")),
            },
        };
        let q7_payment = match self.raw("q7") {
            "instant" => PaymentTiming::Instant,
            s => match s.strip_prefix("after:").map(str::parse::<u32>) {
                Some(Ok(days)) if days > 0 => PaymentTiming::After { days },
                _ => return Err(self.bad("q7")),
            },
        };
        let q8_major_problem = match self.raw("q8") {
            "none" => MajorProblem::None,
            s => match s.strip_prefix("stated:") {
                Some(text) if !text.trim().is_empty() => MajorProblem::Stated(text.trim().to_owned()),
                _ => return Err(self.bad("q8")),
            },
        };
        Ok(SurveyRecord {
            farmer_id,
            q1_years: self.token("q1")?,
            q2_major,
            q3_harvest_months: self.ranged("q3", HARVEST_MONTHS)?,
            q4_cost_recovered: self.token("q4")?,
            q5_rate_paise_per_kg: self.ranged("q5", RATE_PAISE)?,
            q6_worms: self.token("q6")?,
            q7_payment,
            q8_major_problem,
            q9_buyer: self.token("q9")?,
            q10_weather: self.token("q10")?,
            q11_inputs_easy: self.token("q11")?,
            q12_transport: self.token("q12")?,
            q13_wild_animals: self.token("q13")?,
            q14_other_problems: self.token("q14")?,
            q15_seed_source: self.token("q15")?,
        })
    }
}

fn expected_columns() -> Vec<String> {
    std::iter::once("farmer_id".to_owned())
        .chain(QuestionId::ALL.iter().map(|q| q.column()))
        .collect()
}

/// Parse survey CSV from any reader. Column order is free; the column set
/// must be exactly `farmer_id, q1..q15`. Rows are numbered from 1 (the first
/// data row).
pub fn parse_survey<R: Read>(reader: R) -> Result<Vec<SurveyRecord>, SurveyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(|s| s.to_ascii_lowercase()).collect(),
        Err(e) => return Err(SurveyError::Io(e.to_string())),
    };
    if headers.iter().all(String::is_empty) {
        return Err(SurveyError::EmptyFile);
    }
    let expected = expected_columns();
    let missing: Vec<&String> = expected.iter().filter(|c| !headers.contains(c)).collect();
    let unknown: Vec<&String> = headers.iter().filter(|c| !expected.contains(c)).collect();
    if !missing.is_empty() || !unknown.is_empty() || headers.len() != expected.len() {
        return Err(SurveyError::SchemaMismatch(format!(
            "missing {missing:?}, unexpected {unknown:?}"
        )));
    }

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| SurveyError::Io(e.to_string()))?;
        let fields: BTreeMap<String, String> = headers
            .iter()
            .cloned()
            .zip(row.iter().map(str::to_owned))
            .collect();
        out.push(RowReader { row: i + 1, fields: &fields }.record()?);
    }
    if out.is_empty() {
        return Err(SurveyError::EmptyFile);
    }
    Ok(out)
}

pub fn load_survey(path: impl AsRef<Path>) -> Result<Vec<SurveyRecord>, SurveyError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| SurveyError::Io(e.to_string()))?;
    parse_survey(file)
}

pub fn fixture_records() -> Vec<SurveyRecord> {
    parse_survey(FIXTURE_CSV.as_bytes()).expect("bundled fixture parses")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OptionShare {
    pub option: String,
    pub count: u64,
    #[serde(serialize_with = "ser_ratio")]
    pub fraction: Ratio<u64>,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

/// Exact answer counts and fractions for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Distribution {
    pub question: QuestionId,
    pub n: u64,
    pub options: Vec<OptionShare>,
}

impl Distribution {
    pub fn count(&self, option: &str) -> Option<u64> {
        self.options.iter().find(|o| o.option == option).map(|o| o.count)
    }

    pub fn fraction(&self, option: &str) -> Option<Ratio<u64>> {
        self.options.iter().find(|o| o.option == option).map(|o| o.fraction)
    }
}

pub fn tabulate(records: &[SurveyRecord], q: QuestionId) -> Result<Distribution, SurveyError> {
    if records.is_empty() {
        return Err(SurveyError::EmptyInput);
    }
    let n = records.len() as u64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        *counts.entry(r.answer_label(q)).or_default() += 1;
    }
    let labels: Vec<String> = match q.fixed_options() {
        Some(opts) => opts.iter().map(|s| (*s).to_owned()).collect(),
        None => {
            let mut vals: Vec<u64> = counts.keys().filter_map(|k| k.parse().ok()).collect();
            vals.sort_unstable();
            vals.iter().map(u64::to_string).collect()
        }
    };
    let options = labels
        .into_iter()
        .map(|option| {
            let count = counts.get(&option).copied().unwrap_or(0);
            OptionShare {
                fraction: Ratio::new(count, n),
                option,
                count,
            }
        })
        .collect();
    Ok(Distribution {
        question: q,
        n,
        options,
    })
}

pub fn tabulate_all(records: &[SurveyRecord]) -> Result<Vec<Distribution>, SurveyError> {
    QuestionId::ALL.iter().map(|q| tabulate(records, *q)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DelaySummary {
    #[serde(serialize_with = "ser_ratio")]
    pub fraction_delayed: Ratio<u64>,
    pub min_delay_days: Option<u32>,
    pub max_delay_days: Option<u32>,
}

pub fn payment_delay_summary(records: &[SurveyRecord]) -> Result<DelaySummary, SurveyError> {
    if records.is_empty() {
        return Err(SurveyError::EmptyInput);
    }
    let delays: Vec<u32> = records
        .iter()
        .filter_map(|r| match r.q7_payment {
            PaymentTiming::After { days } => Some(days),
            PaymentTiming::Instant => None,
        })
        .collect();
    Ok(DelaySummary {
        fraction_delayed: Ratio::new(delays.len() as u64, records.len() as u64),
        min_delay_days: delays.iter().min().copied(),
        max_delay_days: delays.iter().max().copied(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "farmer_id,q1,q2,q3,q4,q5,q6,q7,q8,q9,q10,q11,q12,q13,q14,q15";
    const ROW: &str = "f1,gt10,yes,9,yes,400,yes,after:30,none,must_find,yes,yes,farmer,yes,no,others";

    fn parse(text: &str) -> Result<Vec<SurveyRecord>, SurveyError> {
        parse_survey(text.as_bytes())
    }

    #[test]
    fn fixture_has_forty_rows() {
        assert_eq!(fixture_records().len(), 40);
    }

    #[test]
    fn bad_enum_value_reports_cell() {
        let row = ROW.replace(",yes,after", ",maybe,after");
        let err = parse(&format!("{HEADER}\n{ROW}\n{row}\n")).unwrap_err();
        assert_eq!(
            err,
            SurveyError::BadValue {
                row: 2,
                column: "q6".into(),
                value: "maybe".into()
            }
        );
    }

    #[test]
    fn out_of_range_numbers_rejected() {
        let row = ROW.replace(",9,", ",12,");
        assert!(matches!(parse(&format!("{HEADER}\n{row}\n")), Err(SurveyError::BadValue { column, .. }) if column == "q3"));
        let row = ROW.replace(",400,", ",250,");
        assert!(matches!(parse(&format!("{HEADER}\n{row}\n")), Err(SurveyError::BadValue { column, .. }) if column == "q5"));
    }

    #[test]
    fn missing_column_is_schema_mismatch() {
        let header = HEADER.trim_end_matches(",q15");
        let row = ROW.trim_end_matches(",others");
        assert!(matches!(
            parse(&format!("{header}\n{row}\n")),
            Err(SurveyError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(parse(""), Err(SurveyError::EmptyFile));
        assert_eq!(parse(&format!("{HEADER}\n")), Err(SurveyError::EmptyFile));
        assert_eq!(tabulate(&[], QuestionId::Q1), Err(SurveyError::EmptyInput));
        assert_eq!(payment_delay_summary(&[]), Err(SurveyError::EmptyInput));
    }

    #[test]
    fn delay_summary_cases() {
        let one = parse(&format!("{HEADER}\n{ROW}\n")).unwrap();
        let s = payment_delay_summary(&one).unwrap();
        assert_eq!(s.fraction_delayed, Ratio::from_integer(1));
        assert_eq!((s.min_delay_days, s.max_delay_days), (Some(30), Some(30)));

        let instant = ROW.replace("after:30", "instant");
        let all_instant = parse(&format!("{HEADER}\n{instant}\n{instant}\n")).unwrap();
        let s = payment_delay_summary(&all_instant).unwrap();
        assert_eq!(s.fraction_delayed, Ratio::from_integer(0));
        assert_eq!(s.min_delay_days, None);
    }

    #[test]
    fn columns_in_any_order() {
        let header: Vec<&str> = HEADER.split(',').rev().collect();
        let row: Vec<&str> = ROW.split(',').rev().collect();
        let recs = parse(&format!("{}\n{}\n", header.join(","), row.join(","))).unwrap();
        assert_eq!(recs, parse(&format!("{HEADER}\n{ROW}\n")).unwrap());
    }

    #[test]
    fn question_ids_parse() {
        assert_eq!("q15".parse::<QuestionId>(), Ok(QuestionId::Q15));
        assert_eq!("Q1".parse::<QuestionId>(), Ok(QuestionId::Q1));
        assert!("q16".parse::<QuestionId>().is_err());
        assert!("q0".parse::<QuestionId>().is_err());
    }
}
