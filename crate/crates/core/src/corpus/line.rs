//! Day trajectories and their one-line text form.
//!
//! A line is `[S |] X0 _ r1 X1 _ r2 X2 ... .` where `S` is the conditioning
//! prefix, each `X` a cell string, each `r` an interval character, `,` follows
//! a stop after which the person went home temporarily, and `.` ends the day.

use std::fmt;

use crate::codec::{
    classify, discretize_interval, representative_minutes, CellString, CharClass, LevelAlphabet, SymbolKind,
    DELIMITER, FINAL_HOME, SEPARATOR, TEMP_HOME,
};

use super::conditioning::{from_tokens, AttributeSet, EnvironmentSet, SpecialToken};
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HomeFlag {
    NotHome,
    TempHome,
    FinalHome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stop {
    pub cell: CellString,
    /// Minutes since `t0`.
    pub offset: u32,
    pub flag: HomeFlag,
}

/// One person-day away from home.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayTrajectory {
    /// Clock time of the first away stop, minutes since midnight.
    pub t0: u32,
    pub stops: Vec<Stop>,
}

impl DayTrajectory {
    /// Checks ordering, home flags and the minimum gap.
    pub fn validate(&self, min_gap: u32) -> Result<(), CorpusError> {
        let bad = |msg: String| CorpusError::InvalidDay(msg);
        if self.stops.is_empty() {
            return Err(bad("no stops".into()));
        }
        if self.stops[0].offset != 0 {
            return Err(bad("first stop must be at offset 0".into()));
        }
        for (i, w) in self.stops.windows(2).enumerate() {
            if w[1].offset <= w[0].offset {
                return Err(bad(format!("offset of stop {} not increasing", i + 1)));
            }
            if w[1].offset - w[0].offset < min_gap {
                return Err(bad(format!("gap before stop {} below {min_gap} min", i + 1)));
            }
        }
        let last = self.stops.len() - 1;
        for (i, s) in self.stops.iter().enumerate() {
            if (s.flag == HomeFlag::FinalHome) != (i == last) {
                return Err(bad(format!("stop {i} has flag {:?}", s.flag)));
            }
        }
        Ok(())
    }

    /// Gaps between consecutive arrivals, in minutes.
    pub fn gaps(&self) -> Vec<u32> {
        self.stops.windows(2).map(|w| w[1].offset - w[0].offset).collect()
    }

    pub fn final_offset(&self) -> u32 {
        self.stops.last().map_or(0, |s| s.offset)
    }

    /// Quantizes gaps into interval bins and attaches conditioning.
    pub fn to_line(&self, env: Option<&EnvironmentSet>, attrs: &AttributeSet) -> Result<TrajectoryLine, CorpusError> {
        let mut stops = Vec::with_capacity(self.stops.len());
        let mut prev = None;
        for s in &self.stops {
            let interval = match prev {
                None => None,
                Some(p) => Some(discretize_interval((s.offset - p) as f64)?),
            };
            prev = Some(s.offset);
            stops.push(LineStop { interval, cell: s.cell.clone(), flag: s.flag });
        }
        let delimited = env.is_some() || !attrs.is_empty();
        Ok(TrajectoryLine { env: env.copied(), attrs: *attrs, delimited, stops })
    }
}

/// A stop as it appears in a line: its interval bin (absent for the first
/// stop), cell and home flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineStop {
    pub interval: Option<u32>,
    pub cell: CellString,
    pub flag: HomeFlag,
}

/// Symbolic content of one corpus line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryLine {
    pub env: Option<EnvironmentSet>,
    pub attrs: AttributeSet,
    /// Whether the line carries a `|`-terminated conditioning prefix.
    pub delimited: bool,
    pub stops: Vec<LineStop>,
}

impl TrajectoryLine {
    pub fn special_tokens(&self) -> Vec<SpecialToken> {
        let mut out: Vec<SpecialToken> = self.env.map(|e| e.tokens().to_vec()).unwrap_or_default();
        out.extend(self.attrs.tokens());
        out
    }

    /// The same trajectory without the conditioning prefix.
    pub fn unconditioned(&self) -> Self {
        Self { env: None, attrs: AttributeSet::default(), delimited: false, stops: self.stops.clone() }
    }

    pub fn intervals(&self) -> impl Iterator<Item = u32> + '_ {
        self.stops.iter().filter_map(|s| s.interval)
    }

    /// Arrival offsets reconstructed from representative bin minutes.
    pub fn representative_offsets(&self, floor: u32) -> Vec<u32> {
        let mut t = 0;
        self.stops
            .iter()
            .map(|s| {
                if let Some(tau) = s.interval {
                    t += representative_minutes(tau, floor);
                }
                t
            })
            .collect()
    }

    fn validate(&self) -> Result<(), String> {
        if self.stops.is_empty() {
            return Err("no stops".into());
        }
        let last = self.stops.len() - 1;
        for (i, s) in self.stops.iter().enumerate() {
            if (i == 0) != s.interval.is_none() {
                return Err(format!("stop {i}: interval presence"));
            }
            if (s.flag == HomeFlag::FinalHome) != (i == last) {
                return Err(format!("stop {i}: flag {:?}", s.flag));
            }
        }
        if !self.delimited && (self.env.is_some() || !self.attrs.is_empty()) {
            return Err("conditioning without delimiter".into());
        }
        Ok(())
    }

    /// Text form of the conditioning prefix including `|`, or empty.
    pub fn prefix_text(&self) -> String {
        let mut out = String::new();
        if self.delimited {
            for t in self.special_tokens() {
                out.push_str(t.as_str());
            }
            out.push(DELIMITER);
        }
        out
    }

    /// Renders the line. Special tokens are always emitted in category order.
    pub fn to_text(&self, alphabet: &LevelAlphabet) -> Result<String, CorpusError> {
        self.validate().map_err(CorpusError::InvalidDay)?;
        let mut out = self.prefix_text();
        for s in &self.stops {
            if let Some(tau) = s.interval {
                out.push(SEPARATOR);
                out.push(alphabet.interval_char(tau)?);
            }
            out.push_str(s.cell.as_str());
            match s.flag {
                HomeFlag::TempHome => out.push(TEMP_HOME),
                HomeFlag::FinalHome => out.push(FINAL_HOME),
                HomeFlag::NotHome => {}
            }
        }
        Ok(out)
    }
}

/// Serializes a day with optional conditioning. The prefix is written when an
/// environment is given or any attribute is known.
pub fn serialize(
    day: &DayTrajectory,
    env: Option<&EnvironmentSet>,
    attrs: &AttributeSet,
    alphabet: &LevelAlphabet,
) -> Result<String, CorpusError> {
    day.to_line(env, attrs)?.to_text(alphabet)
}

/// Grammar violation with the character position where it was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub position: usize,
    pub reason: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at char {}: {}", self.position, self.reason)
    }
}

/// Parses a line. Special tokens are accepted in any order.
pub fn parse(text: &str, alphabet: &LevelAlphabet) -> Result<TrajectoryLine, LineError> {
    let err = |position: usize, reason: &str| LineError { position, reason: reason.to_string() };
    let chars: Vec<char> = text.chars().collect();

    let (env, attrs, delimited, body_start) = match chars.iter().position(|&c| c == DELIMITER) {
        Some(bar) => {
            let mut tokens = Vec::new();
            let prefix: String = chars[..bar].iter().collect();
            let mut rest = prefix.as_str();
            let mut pos = 0;
            while !rest.is_empty() {
                let tok = SpecialToken::match_prefix(rest).ok_or_else(|| err(pos, "unknown token in conditioning prefix"))?;
                let n = tok.as_str().len();
                pos += tok.as_str().chars().count();
                rest = &rest[n..];
                tokens.push(tok);
            }
            let (env, attrs) = from_tokens(&tokens).map_err(|r| err(bar, &r))?;
            (env, attrs, true, bar + 1)
        }
        None => (None, AttributeSet::default(), false, 0),
    };

    let mut stops = Vec::new();
    let mut i = body_start;
    let mut pending_interval = None;
    loop {
        // Cell: consecutive level characters starting at level 1.
        let start = i;
        while i < chars.len() {
            let want = SymbolKind::Level((i - start + 1) as u8);
            if (i - start) < 5 && classify(chars[i]) == Some(CharClass::Symbol(want)) {
                i += 1;
            } else {
                break;
            }
        }
        if i == start {
            let reason = match chars.get(i).copied().and_then(classify) {
                None if i >= chars.len() => "expected location, found end of line",
                Some(CharClass::Symbol(SymbolKind::Interval)) => "interval character in location position",
                Some(CharClass::Grammar(SEPARATOR)) => "consecutive separators",
                _ => "expected location",
            };
            return Err(err(i, reason));
        }
        let cell_text: String = chars[start..i].iter().collect();
        alphabet.chars_to_cell(&cell_text).map_err(|e| err(start, &e.to_string()))?;
        let cell = CellString::from_chars(&cell_text).map_err(|e| err(start, &e.to_string()))?;

        let flag = match chars.get(i) {
            Some(&FINAL_HOME) => {
                if i + 1 != chars.len() {
                    return Err(err(i + 1, "text after final '.'"));
                }
                stops.push(LineStop { interval: pending_interval, cell, flag: HomeFlag::FinalHome });
                break;
            }
            Some(&TEMP_HOME) => {
                i += 1;
                HomeFlag::TempHome
            }
            Some(&SEPARATOR) => HomeFlag::NotHome,
            None => return Err(err(i, "missing terminal '.'")),
            Some(_) => return Err(err(i, "expected '_', ',' or '.' after location")),
        };
        stops.push(LineStop { interval: pending_interval, cell, flag });
        if chars.get(i) != Some(&SEPARATOR) {
            return Err(err(i, if i >= chars.len() { "missing terminal '.'" } else { "expected '_'" }));
        }
        i += 1;
        match chars.get(i).copied() {
            Some(c) if classify(c) == Some(CharClass::Symbol(SymbolKind::Interval)) => {
                pending_interval = Some(alphabet.interval_of(c).map_err(|e| err(i, &e.to_string()))?);
                i += 1;
            }
            Some(SEPARATOR) => return Err(err(i, "consecutive separators")),
            Some(_) => return Err(err(i, "expected interval character after '_'")),
            None => return Err(err(i, "line ends after '_'")),
        }
    }
    Ok(TrajectoryLine { env, attrs, delimited, stops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_cell, BoundingBox, GeoPoint};
    use crate::corpus::conditioning::{AgeBand, CovidBand, DayType, Gender, TempBand, Weather};

    fn setup() -> (LevelAlphabet, Vec<CellString>) {
        let mut a = LevelAlphabet::default();
        let cells = [(35.68, 139.76), (35.65, 139.90), (35.70, 139.70), (35.60, 139.80), (35.66, 139.91)]
            .iter()
            .map(|&(la, lo)| {
                let code = encode_cell(&GeoPoint::new(la, lo).unwrap(), 5, &BoundingBox::JAPAN).unwrap();
                a.register_cell(&code).unwrap()
            })
            .collect();
        for tau in 1..=18 {
            a.register_interval(tau).unwrap();
        }
        (a, cells)
    }

    fn env() -> EnvironmentSet {
        EnvironmentSet { day_type: DayType::Weekday, temp: TempBand::From25To30, weather: Weather::Cloudy, covid: CovidBand::AtLeast30000 }
    }

    fn full_attrs() -> AttributeSet {
        AttributeSet { gender: Some(Gender::Male), age: Some(AgeBand::From30To59), home_in_city: Some(true), work_in_city: Some(false) }
    }

    fn stop(cell: &CellString, offset: u32, flag: HomeFlag) -> Stop {
        Stop { cell: cell.clone(), offset, flag }
    }

    #[test]
    fn two_stop_conditioned_shape() {
        let (a, c) = setup();
        let day = DayTrajectory { t0: 480, stops: vec![stop(&c[0], 0, HomeFlag::NotHome), stop(&c[1], 30, HomeFlag::FinalHome)] };
        let text = serialize(&day, Some(&env()), &full_attrs(), &a).unwrap();
        let mut expected: String = ["[Weekday]", "[25C<=T<30C]", "[Cloudy]", "[N>=30000]", "[Male]", "[30to59]", "[HomeInCity]", "[WorkOutside]"].concat();
        expected.push('|');
        expected.push_str(c[0].as_str());
        expected.push('_');
        expected.push(a.interval_char(9).unwrap());
        expected.push_str(c[1].as_str());
        expected.push('.');
        assert_eq!(text, expected);
        assert_eq!(parse(&text, &a).unwrap(), day.to_line(Some(&env()), &full_attrs()).unwrap());
    }

    #[test]
    fn missing_attributes_are_omitted() {
        let (a, c) = setup();
        let day = DayTrajectory { t0: 480, stops: vec![stop(&c[0], 0, HomeFlag::NotHome), stop(&c[1], 30, HomeFlag::FinalHome)] };
        let attrs = AttributeSet { gender: None, age: None, ..full_attrs() };
        let line = day.to_line(Some(&env()), &attrs).unwrap();
        assert_eq!(line.special_tokens().len(), 6);
        let text = line.to_text(&a).unwrap();
        assert_eq!(parse(&text, &a).unwrap(), line);
    }

    #[test]
    fn temp_home_comma() {
        let (a, c) = setup();
        let day = DayTrajectory {
            t0: 420,
            stops: vec![stop(&c[0], 0, HomeFlag::TempHome), stop(&c[1], 120, HomeFlag::NotHome), stop(&c[2], 200, HomeFlag::FinalHome)],
        };
        let text = serialize(&day, None, &AttributeSet::default(), &a).unwrap();
        let expected = format!("{},_{}{}_{}{}.", c[0], a.interval_char(12).unwrap(), c[1], a.interval_char(11).unwrap(), c[2]);
        assert_eq!(text, expected);
        let line = parse(&text, &a).unwrap();
        assert!(!line.delimited);
        assert_eq!(line.stops[0].flag, HomeFlag::TempHome);
    }

    #[test]
    fn grammar_violations() {
        let (a, c) = setup();
        let r = a.interval_char(9).unwrap();
        let double = format!("{}__{}{}.", c[0], r, c[1]);
        assert_eq!(parse(&double, &a).unwrap_err().reason, "consecutive separators");
        let unterminated = format!("{}_{}{}", c[0], r, c[1]);
        assert_eq!(parse(&unterminated, &a).unwrap_err().reason, "missing terminal '.'");
        let interval_first = format!("{r}{}.", c[0]);
        assert_eq!(parse(&interval_first, &a).unwrap_err().reason, "interval character in location position");
        let no_interval = format!("{}_{}.", c[0], c[1]);
        assert!(parse(&no_interval, &a).is_err());
        let trailing = format!("{}.{}", c[0], c[1]);
        assert!(parse(&trailing, &a).is_err());
        assert!(parse("[Bogus]|x.", &a).is_err());
    }

    #[test]
    fn unconditioned_line_parses() {
        let (a, c) = setup();
        let text = format!("{}_{}{}.", c[0], a.interval_char(9).unwrap(), c[1]);
        let line = parse(&text, &a).unwrap();
        assert!(line.env.is_none() && line.attrs.is_empty() && !line.delimited);
        assert_eq!(line.to_text(&a).unwrap(), text);
    }

    #[test]
    fn prefix_order_is_free_when_parsing() {
        let (a, c) = setup();
        let text = format!("[Male][Weekday][Sunny][T<25C][N<20000]|{}_{}{}.", c[0], a.interval_char(9).unwrap(), c[1]);
        let line = parse(&text, &a).unwrap();
        assert_eq!(line.attrs.gender, Some(Gender::Male));
        assert!(line.env.is_some());
        let canonical = line.to_text(&a).unwrap();
        assert!(canonical.starts_with("[Weekday][T<25C][Sunny][N<20000][Male]|"));
    }

    #[test]
    fn day_validation() {
        let (_, c) = setup();
        let ok = DayTrajectory { t0: 0, stops: vec![stop(&c[0], 0, HomeFlag::NotHome), stop(&c[1], 10, HomeFlag::FinalHome)] };
        assert!(ok.validate(10).is_ok());
        let short = DayTrajectory { t0: 0, stops: vec![stop(&c[0], 0, HomeFlag::NotHome), stop(&c[1], 9, HomeFlag::FinalHome)] };
        assert!(short.validate(10).is_err());
        let no_final = DayTrajectory { t0: 0, stops: vec![stop(&c[0], 0, HomeFlag::NotHome), stop(&c[1], 20, HomeFlag::NotHome)] };
        assert!(no_final.validate(10).is_err());
    }
}
