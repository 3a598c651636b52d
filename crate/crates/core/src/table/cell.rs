use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

/// Symbols recognised as a leading currency marker.
pub const CURRENCY_SYMBOLS: [char; 3] = ['$', '€', '£'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Text,
    Integer,
    Decimal,
    Percentage,
    Currency,
}

impl CellKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, CellKind::Text)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Text => "text",
            CellKind::Integer => "integer",
            CellKind::Decimal => "decimal",
            CellKind::Percentage => "percentage",
            CellKind::Currency => "currency",
        }
    }
}

/// A single table cell: the verbatim text plus its inferred type.
///
/// `numeric` is present exactly when `kind` is not [`CellKind::Text`].
/// Percentages keep their face value (`"28%"` stores 28).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellValue {
    pub raw: String,
    pub kind: CellKind,
    #[serde(default, with = "decimal_opt")]
    pub numeric: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub currency_symbol: Option<String>,
}

impl CellValue {
    pub fn new(raw: impl Into<String>) -> Self {
        coerce_cell(&raw.into())
    }

    pub fn is_empty(&self) -> bool {
        self.raw.trim().is_empty()
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // sign, optional currency symbol, grouped-or-plain integer part, optional fraction, optional %
    RE.get_or_init(|| {
        Regex::new(
            r"^(?P<sign>[+-]?)(?:(?P<sym>[$€£]) ?)?(?P<int>[0-9]{1,3}(?:,[0-9]{3})+|[0-9]+)(?P<frac>\.[0-9]+)?(?P<pct> ?%)?$",
        )
        .expect("static regex")
    })
}

/// Infers the kind and exact numeric value of a raw cell.
///
/// Detection runs on the trimmed text; `raw` is kept verbatim. Anything that
/// is not a currency amount, percentage, integer or decimal is text.
pub fn coerce_cell(raw: &str) -> CellValue {
    let text = CellValue {
        raw: raw.to_string(),
        kind: CellKind::Text,
        numeric: None,
        currency_symbol: None,
    };
    let Some(caps) = number_re().captures(raw.trim()) else {
        return text;
    };
    let symbol = caps.name("sym").map(|m| m.as_str()).unwrap_or("");
    let percent = caps.name("pct").is_some();
    if !symbol.is_empty() && percent {
        return text;
    }
    let mut digits = String::new();
    if caps.name("sign").map(|m| m.as_str()) == Some("-") {
        digits.push('-');
    }
    digits.extend(caps["int"].chars().filter(|c| *c != ','));
    if let Some(frac) = caps.name("frac") {
        digits.push_str(frac.as_str());
    }
    let Ok(value) = Decimal::from_str(&digits) else {
        return text;
    };
    let kind = if !symbol.is_empty() {
        CellKind::Currency
    } else if percent {
        CellKind::Percentage
    } else if caps.name("frac").is_some() {
        CellKind::Decimal
    } else {
        CellKind::Integer
    };
    CellValue {
        raw: raw.to_string(),
        kind,
        numeric: Some(value),
        currency_symbol: (!symbol.is_empty()).then(|| symbol.to_string()),
    }
}

/// Numeric value of a cell string under the same rules as [`coerce_cell`].
pub fn to_number(cell_text: &str) -> Option<Decimal> {
    coerce_cell(cell_text).numeric
}

mod decimal_opt {
    use std::str::FromStr;

    use rust_decimal::Decimal;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Decimal>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(d) => s.serialize_some(&d.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Decimal>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        text.map(|t| Decimal::from_str(&t).map_err(serde::de::Error::custom))
            .transpose()
    }
}
