//! Environment and attribute conditioning tokens.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DayType {
    Weekday,
    Weekend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TempBand {
    Below25,
    From25To30,
    AtLeast30,
}

impl TempBand {
    pub fn from_celsius(t: f64) -> Self {
        if t < 25.0 {
            TempBand::Below25
        } else if t < 30.0 {
            TempBand::From25To30
        } else {
            TempBand::AtLeast30
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weather {
    Sunny,
    Cloudy,
    Rainy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CovidBand {
    Below20000,
    From20000To30000,
    AtLeast30000,
}

impl CovidBand {
    pub fn from_count(n: u64) -> Self {
        if n < 20_000 {
            CovidBand::Below20000
        } else if n < 30_000 {
            CovidBand::From20000To30000
        } else {
            CovidBand::AtLeast30000
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgeBand {
    Under29,
    From30To59,
    Over60,
}

impl AgeBand {
    pub fn from_years(age: u32) -> Self {
        match age {
            0..=29 => AgeBand::Under29,
            30..=59 => AgeBand::From30To59,
            _ => AgeBand::Over60,
        }
    }
}

/// Day-level conditions; always fully known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvironmentSet {
    pub day_type: DayType,
    pub temp: TempBand,
    pub weather: Weather,
    pub covid: CovidBand,
}

impl EnvironmentSet {
    pub fn tokens(&self) -> [SpecialToken; 4] {
        use SpecialToken::*;
        [
            match self.day_type {
                DayType::Weekday => Weekday,
                DayType::Weekend => Weekend,
            },
            match self.temp {
                TempBand::Below25 => TempBelow25,
                TempBand::From25To30 => Temp25To30,
                TempBand::AtLeast30 => TempAtLeast30,
            },
            match self.weather {
                Weather::Sunny => Sunny,
                Weather::Cloudy => Cloudy,
                Weather::Rainy => Rainy,
            },
            match self.covid {
                CovidBand::Below20000 => CasesBelow20000,
                CovidBand::From20000To30000 => Cases20000To30000,
                CovidBand::AtLeast30000 => CasesAtLeast30000,
            },
        ]
    }
}

/// Per-person attributes; `None` means unknown and emits no token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AttributeSet {
    pub gender: Option<Gender>,
    pub age: Option<AgeBand>,
    pub home_in_city: Option<bool>,
    pub work_in_city: Option<bool>,
}

impl AttributeSet {
    pub fn tokens(&self) -> Vec<SpecialToken> {
        use SpecialToken::*;
        let mut out = Vec::with_capacity(4);
        if let Some(g) = self.gender {
            out.push(match g {
                Gender::Male => Male,
                Gender::Female => Female,
            });
        }
        if let Some(a) = self.age {
            out.push(match a {
                AgeBand::Under29 => AgeUnder29,
                AgeBand::From30To59 => Age30To59,
                AgeBand::Over60 => AgeOver60,
            });
        }
        if let Some(h) = self.home_in_city {
            out.push(if h { HomeInCity } else { HomeOutside });
        }
        if let Some(w) = self.work_in_city {
            out.push(if w { WorkInCity } else { WorkOutside });
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.gender.is_none() && self.age.is_none() && self.home_in_city.is_none() && self.work_in_city.is_none()
    }

    /// Fills unknown fields from `other`.
    pub fn merge_missing(&mut self, other: &AttributeSet) {
        self.gender = self.gender.or(other.gender);
        self.age = self.age.or(other.age);
        self.home_in_city = self.home_in_city.or(other.home_in_city);
        self.work_in_city = self.work_in_city.or(other.work_in_city);
    }
}

/// One of the eight conditioning slots, in serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecialCategory {
    DayOfWeek,
    Temperature,
    Weather,
    Covid,
    Gender,
    Age,
    HomeArea,
    WorkArea,
}

impl SpecialCategory {
    pub const ALL: [SpecialCategory; 8] = [
        SpecialCategory::DayOfWeek,
        SpecialCategory::Temperature,
        SpecialCategory::Weather,
        SpecialCategory::Covid,
        SpecialCategory::Gender,
        SpecialCategory::Age,
        SpecialCategory::HomeArea,
        SpecialCategory::WorkArea,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short label used in attention reports.
    pub fn label(self) -> &'static str {
        match self {
            SpecialCategory::DayOfWeek => "s(dow)",
            SpecialCategory::Temperature => "s(temp)",
            SpecialCategory::Weather => "s(wth)",
            SpecialCategory::Covid => "s(cov)",
            SpecialCategory::Gender => "s(gen)",
            SpecialCategory::Age => "s(age)",
            SpecialCategory::HomeArea => "s(hc)",
            SpecialCategory::WorkArea => "s(wc)",
        }
    }
}

/// The twenty conditioning tokens: eleven environmental, nine attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecialToken {
    Weekday,
    Weekend,
    TempBelow25,
    Temp25To30,
    TempAtLeast30,
    Sunny,
    Cloudy,
    Rainy,
    CasesBelow20000,
    Cases20000To30000,
    CasesAtLeast30000,
    Male,
    Female,
    AgeUnder29,
    Age30To59,
    AgeOver60,
    HomeInCity,
    HomeOutside,
    WorkInCity,
    WorkOutside,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 20] = {
        use SpecialToken::*;
        [
            Weekday,
            Weekend,
            TempBelow25,
            Temp25To30,
            TempAtLeast30,
            Sunny,
            Cloudy,
            Rainy,
            CasesBelow20000,
            Cases20000To30000,
            CasesAtLeast30000,
            Male,
            Female,
            AgeUnder29,
            Age30To59,
            AgeOver60,
            HomeInCity,
            HomeOutside,
            WorkInCity,
            WorkOutside,
        ]
    };

    pub fn as_str(self) -> &'static str {
        use SpecialToken::*;
        match self {
            Weekday => "[Weekday]",
            Weekend => "[Weekend]",
            TempBelow25 => "[T<25C]",
            Temp25To30 => "[25C<=T<30C]",
            TempAtLeast30 => "[T>=30C]",
            Sunny => "[Sunny]",
            Cloudy => "[Cloudy]",
            Rainy => "[Rainy]",
            CasesBelow20000 => "[N<20000]",
            Cases20000To30000 => "[20000<=N<30000]",
            CasesAtLeast30000 => "[N>=30000]",
            Male => "[Male]",
            Female => "[Female]",
            AgeUnder29 => "[Under29]",
            Age30To59 => "[30to59]",
            AgeOver60 => "[Over60]",
            HomeInCity => "[HomeInCity]",
            HomeOutside => "[HomeOutside]",
            WorkInCity => "[WorkInCity]",
            WorkOutside => "[WorkOutside]",
        }
    }

    pub fn category(self) -> SpecialCategory {
        use SpecialToken::*;
        match self {
            Weekday | Weekend => SpecialCategory::DayOfWeek,
            TempBelow25 | Temp25To30 | TempAtLeast30 => SpecialCategory::Temperature,
            Sunny | Cloudy | Rainy => SpecialCategory::Weather,
            CasesBelow20000 | Cases20000To30000 | CasesAtLeast30000 => SpecialCategory::Covid,
            Male | Female => SpecialCategory::Gender,
            AgeUnder29 | Age30To59 | AgeOver60 => SpecialCategory::Age,
            HomeInCity | HomeOutside => SpecialCategory::HomeArea,
            WorkInCity | WorkOutside => SpecialCategory::WorkArea,
        }
    }

    pub fn from_str_exact(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Token at the start of `s`, if any.
    pub fn match_prefix(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| s.starts_with(t.as_str()))
    }
}

impl fmt::Display for SpecialToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Builds environment and attribute sets back from a token list. Fails on a
/// repeated category or a partial environment.
pub fn from_tokens(tokens: &[SpecialToken]) -> Result<(Option<EnvironmentSet>, AttributeSet), String> {
    use SpecialToken::*;
    let mut seen = [false; 8];
    let mut day_type = None;
    let mut temp = None;
    let mut weather = None;
    let mut covid = None;
    let mut attrs = AttributeSet::default();
    for &t in tokens {
        let cat = t.category().index();
        if seen[cat] {
            return Err(format!("category of {t} appears twice"));
        }
        seen[cat] = true;
        match t {
            Weekday => day_type = Some(DayType::Weekday),
            Weekend => day_type = Some(DayType::Weekend),
            TempBelow25 => temp = Some(TempBand::Below25),
            Temp25To30 => temp = Some(TempBand::From25To30),
            TempAtLeast30 => temp = Some(TempBand::AtLeast30),
            Sunny => weather = Some(Weather::Sunny),
            Cloudy => weather = Some(Weather::Cloudy),
            Rainy => weather = Some(Weather::Rainy),
            CasesBelow20000 => covid = Some(CovidBand::Below20000),
            Cases20000To30000 => covid = Some(CovidBand::From20000To30000),
            CasesAtLeast30000 => covid = Some(CovidBand::AtLeast30000),
            Male => attrs.gender = Some(Gender::Male),
            Female => attrs.gender = Some(Gender::Female),
            AgeUnder29 => attrs.age = Some(AgeBand::Under29),
            Age30To59 => attrs.age = Some(AgeBand::From30To59),
            AgeOver60 => attrs.age = Some(AgeBand::Over60),
            HomeInCity => attrs.home_in_city = Some(true),
            HomeOutside => attrs.home_in_city = Some(false),
            WorkInCity => attrs.work_in_city = Some(true),
            WorkOutside => attrs.work_in_city = Some(false),
        }
    }
    let env = match (day_type, temp, weather, covid) {
        (Some(day_type), Some(temp), Some(weather), Some(covid)) => Some(EnvironmentSet { day_type, temp, weather, covid }),
        (None, None, None, None) => None,
        _ => return Err("incomplete environment tokens".into()),
    };
    Ok((env, attrs))
}

/// Raw per-day conditions as stored in the environment CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentRow {
    pub date: NaiveDate,
    pub day_type: DayType,
    pub temp_c: f64,
    pub weather: Weather,
    pub covid_count: u64,
}

impl EnvironmentRow {
    pub fn bands(&self) -> EnvironmentSet {
        EnvironmentSet {
            day_type: self.day_type,
            temp: TempBand::from_celsius(self.temp_c),
            weather: self.weather,
            covid: CovidBand::from_count(self.covid_count),
        }
    }
}

pub const ENVIRONMENT_HEADER: [&str; 5] = ["date", "day_type", "temp_c", "weather", "covid_count"];

pub fn write_environment_csv<W: Write>(w: W, rows: &[EnvironmentRow]) -> Result<(), CorpusError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(ENVIRONMENT_HEADER)?;
    for r in rows {
        let day = match r.day_type {
            DayType::Weekday => "Weekday",
            DayType::Weekend => "Weekend",
        };
        let weather = match r.weather {
            Weather::Sunny => "Sunny",
            Weather::Cloudy => "Cloudy",
            Weather::Rainy => "Rainy",
        };
        wr.write_record([r.date.to_string(), day.to_string(), format!("{:.1}", r.temp_c), weather.to_string(), r.covid_count.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads the environment table into banded sets keyed by date.
pub fn read_environment_csv<R: Read>(r: R) -> Result<BTreeMap<NaiveDate, EnvironmentSet>, CorpusError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ENVIRONMENT_HEADER {
        return Err(CorpusError::Header(format!("environment CSV header {headers:?}")));
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CorpusError::Environment(format!("row {}: {what}", i + 2));
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|_| bad("bad date"))?;
        let day_type = match rec[1].to_ascii_lowercase().as_str() {
            "weekday" => DayType::Weekday,
            "weekend" => DayType::Weekend,
            _ => return Err(bad("bad day_type")),
        };
        let temp_c: f64 = rec[2].parse().map_err(|_| bad("bad temp_c"))?;
        let weather = match rec[3].to_ascii_lowercase().as_str() {
            "sunny" => Weather::Sunny,
            "cloudy" => Weather::Cloudy,
            "rainy" => Weather::Rainy,
            _ => return Err(bad("bad weather")),
        };
        let covid_count: u64 = rec[4].parse().map_err(|_| bad("bad covid_count"))?;
        let row = EnvironmentRow { date, day_type, temp_c, weather, covid_count };
        out.insert(date, row.bands());
    }
    Ok(out)
}
