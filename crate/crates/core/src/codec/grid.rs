//! Hierarchical grid cells following the JIS X 0410 regional mesh.
//!
//! Level 1 cells span 40' of latitude by 1° of longitude. Level 2 splits them
//! 8×8, level 3 splits level 2 10×10, and levels 4 and 5 are successive 2×2
//! quadrant splits (numbered 1=SW, 2=SE, 3=NW, 4=NE). A level-5 cell is roughly
//! 230 m × 280 m at the latitude of Tokyo.
//!
//! All subdivision intervals are half-open `[low, high)`.

use std::fmt;

use super::CodecError;

/// Finest supported level.
pub const MAX_LEVEL: u8 = 5;

/// Cells per degree of latitude at levels 1..=5.
const LAT_UNITS: [f64; 5] = [1.5, 12.0, 120.0, 240.0, 480.0];
/// Cells per degree of longitude at levels 1..=5.
const LON_UNITS: [f64; 5] = [1.0, 8.0, 80.0, 160.0, 320.0];

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, CodecError> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(CodecError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lat, self.lon)
    }
}

/// Region in which points may be encoded. Bounds are half-open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub const JAPAN: BoundingBox = BoundingBox { lat_min: 20.0, lat_max: 46.0, lon_min: 122.0, lon_max: 154.0 };

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lat >= self.lat_min && p.lat < self.lat_max && p.lon >= self.lon_min && p.lon < self.lon_max
    }
}

impl Default for BoundingBox {
    fn default() -> Self {
        Self::JAPAN
    }
}

/// Index tuple of a mesh cell populated down to `level`.
///
/// Fields below `level` are zero. Ordering is level first, then the index
/// tuple `(p, u, q, v, e, f, q4, q5)` lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCode {
    level: u8,
    p: i32,
    u: i32,
    q: u8,
    v: u8,
    e: u8,
    f: u8,
    q4: u8,
    q5: u8,
}

impl GridCode {
    /// Builds a code from explicit indices. Entries past `level` must be zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(level: u8, p: i32, u: i32, q: u8, v: u8, e: u8, f: u8, q4: u8, q5: u8) -> Result<Self, CodecError> {
        let code = Self { level, p, u, q, v, e, f, q4, q5 };
        code.validate()?;
        Ok(code)
    }

    pub fn level1(p: i32, u: i32) -> Self {
        Self { level: 1, p, u, q: 0, v: 0, e: 0, f: 0, q4: 0, q5: 0 }
    }

    fn validate(&self) -> Result<(), CodecError> {
        let bad = || CodecError::InvalidGridCode(format!("{self:?}"));
        if !(1..=MAX_LEVEL).contains(&self.level) {
            return Err(bad());
        }
        let lvl = self.level;
        let check = |present: bool, value: u8, lo: u8, hi: u8| if present { (lo..=hi).contains(&value) } else { value == 0 };
        let ok = check(lvl >= 2, self.q, 0, 7)
            && check(lvl >= 2, self.v, 0, 7)
            && check(lvl >= 3, self.e, 0, 9)
            && check(lvl >= 3, self.f, 0, 9)
            && check(lvl >= 4, self.q4, 1, 4)
            && check(lvl >= 5, self.q5, 1, 4);
        if ok {
            Ok(())
        } else {
            Err(bad())
        }
    }

    pub fn level(&self) -> u8 {
        self.level
    }
    pub fn p(&self) -> i32 {
        self.p
    }
    pub fn u(&self) -> i32 {
        self.u
    }
    pub fn q(&self) -> Option<u8> {
        (self.level >= 2).then_some(self.q)
    }
    pub fn v(&self) -> Option<u8> {
        (self.level >= 2).then_some(self.v)
    }
    pub fn e(&self) -> Option<u8> {
        (self.level >= 3).then_some(self.e)
    }
    pub fn f(&self) -> Option<u8> {
        (self.level >= 3).then_some(self.f)
    }
    pub fn q4(&self) -> Option<u8> {
        (self.level >= 4).then_some(self.q4)
    }
    pub fn q5(&self) -> Option<u8> {
        (self.level >= 5).then_some(self.q5)
    }

    /// Index tuple of one level, as registered in that level's alphabet.
    pub fn level_key(&self, level: u8) -> Option<LevelKey> {
        if level == 0 || level > self.level {
            return None;
        }
        Some(match level {
            1 => LevelKey(self.p, self.u),
            2 => LevelKey(self.q as i32, self.v as i32),
            3 => LevelKey(self.e as i32, self.f as i32),
            4 => LevelKey(self.q4 as i32, 0),
            _ => LevelKey(self.q5 as i32, 0),
        })
    }

    /// Reassembles a code from per-level keys (index 0 is level 1).
    pub fn from_level_keys(keys: &[LevelKey]) -> Result<Self, CodecError> {
        if keys.is_empty() || keys.len() > MAX_LEVEL as usize {
            return Err(CodecError::InvalidGridCode(format!("{} levels", keys.len())));
        }
        let mut code = Self::level1(keys[0].0, keys[0].1);
        code.level = keys.len() as u8;
        let narrow = |x: i32| u8::try_from(x).map_err(|_| CodecError::InvalidGridCode(format!("{keys:?}")));
        if let Some(k) = keys.get(1) {
            code.q = narrow(k.0)?;
            code.v = narrow(k.1)?;
        }
        if let Some(k) = keys.get(2) {
            code.e = narrow(k.0)?;
            code.f = narrow(k.1)?;
        }
        if let Some(k) = keys.get(3) {
            code.q4 = narrow(k.0)?;
        }
        if let Some(k) = keys.get(4) {
            code.q5 = narrow(k.0)?;
        }
        code.validate()?;
        Ok(code)
    }

    /// Integer cell coordinates `(row, col)` at this code's own level.
    fn lattice(&self) -> (i64, i64) {
        let mut row = self.p as i64;
        let mut col = self.u as i64 + 100;
        if self.level >= 2 {
            row = row * 8 + self.q as i64;
            col = col * 8 + self.v as i64;
        }
        if self.level >= 3 {
            row = row * 10 + self.e as i64;
            col = col * 10 + self.f as i64;
        }
        for quad in [self.q4, self.q5].into_iter().take(self.level.saturating_sub(3) as usize) {
            let (north, east) = quadrant_bits(quad);
            row = row * 2 + north;
            col = col * 2 + east;
        }
        (row, col)
    }

    fn from_lattice(level: u8, row: i64, col: i64) -> Self {
        let mut code = Self { level, p: 0, u: 0, q: 0, v: 0, e: 0, f: 0, q4: 0, q5: 0 };
        let (mut r, mut c) = (row, col);
        if level >= 5 {
            code.q5 = quadrant_number(r.rem_euclid(2), c.rem_euclid(2));
            r = r.div_euclid(2);
            c = c.div_euclid(2);
        }
        if level >= 4 {
            code.q4 = quadrant_number(r.rem_euclid(2), c.rem_euclid(2));
            r = r.div_euclid(2);
            c = c.div_euclid(2);
        }
        if level >= 3 {
            code.e = r.rem_euclid(10) as u8;
            code.f = c.rem_euclid(10) as u8;
            r = r.div_euclid(10);
            c = c.div_euclid(10);
        }
        if level >= 2 {
            code.q = r.rem_euclid(8) as u8;
            code.v = c.rem_euclid(8) as u8;
            r = r.div_euclid(8);
            c = c.div_euclid(8);
        }
        code.p = r as i32;
        code.u = (c - 100) as i32;
        code
    }

    /// Truncates to a coarser level.
    pub fn ancestor(&self, level: u8) -> Option<Self> {
        if level == 0 || level > self.level {
            return None;
        }
        let mut code = *self;
        code.level = level;
        if level < 5 {
            code.q5 = 0;
        }
        if level < 4 {
            code.q4 = 0;
        }
        if level < 3 {
            code.e = 0;
            code.f = 0;
        }
        if level < 2 {
            code.q = 0;
            code.v = 0;
        }
        Some(code)
    }

    /// Southwest corner and size `(lat, lon, height, width)` in degrees.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let idx = self.level as usize - 1;
        let (row, col) = self.lattice();
        let h = 1.0 / LAT_UNITS[idx];
        let w = 1.0 / LON_UNITS[idx];
        (row as f64 * h, col as f64 * w, h, w)
    }
}

impl fmt::Display for GridCode {
    /// Hyphen-separated index list, e.g. `53-39-4-6-1-1-3-2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.p, self.u)?;
        if self.level >= 2 {
            write!(f, "-{}-{}", self.q, self.v)?;
        }
        if self.level >= 3 {
            write!(f, "-{}-{}", self.e, self.f)?;
        }
        if self.level >= 4 {
            write!(f, "-{}", self.q4)?;
        }
        if self.level >= 5 {
            write!(f, "-{}", self.q5)?;
        }
        Ok(())
    }
}

/// Per-level index tuple. Single-index levels (quadrants, intervals) use 0 as
/// the second component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelKey(pub i32, pub i32);

fn quadrant_bits(q: u8) -> (i64, i64) {
    let z = (q - 1) as i64;
    (z / 2, z % 2)
}

fn quadrant_number(north: i64, east: i64) -> u8 {
    (1 + east + 2 * north) as u8
}

/// Encodes a point into the cell containing it at `level`.
pub fn encode_cell(point: &GeoPoint, level: u8, bbox: &BoundingBox) -> Result<GridCode, CodecError> {
    if !(1..=MAX_LEVEL).contains(&level) {
        return Err(CodecError::InvalidLevel(level));
    }
    if !bbox.contains(point) {
        return Err(CodecError::OutOfBounds(*point));
    }
    // Work at the finest resolution and coarsen with integer arithmetic so that
    // every level is consistent with its parent.
    let row = exact_floor(point.lat, LAT_UNITS[4]);
    let col = exact_floor(point.lon, LON_UNITS[4]);
    let code = GridCode::from_lattice(MAX_LEVEL, row, col);
    Ok(code.ancestor(level).expect("level validated"))
}

/// `floor(x * k)` for the exact real product. A product that rounds up onto
/// an integer is detected through the fused residual.
fn exact_floor(x: f64, k: f64) -> i64 {
    let prod = x * k;
    let mut r = prod.floor();
    if prod == r && x.mul_add(k, -r) < 0.0 {
        r -= 1.0;
    }
    r as i64
}

/// Center of the cell at the code's own level.
pub fn decode_center(code: &GridCode) -> GeoPoint {
    let (lat, lon, h, w) = code.bounds();
    GeoPoint { lat: lat + h / 2.0, lon: lon + w / 2.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = num_rational::Ratio<i128>;

    /// Exact rational value of a finite f64.
    fn exact(x: f64) -> Q {
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1 << 52), exp - 1075) };
        if e >= 0 {
            Q::from_integer(sign * (mant << e))
        } else {
            Q::new(sign * mant, 1i128 << (-e))
        }
    }

    /// Locates a point by scanning candidate subdivisions, comparing the
    /// exact coordinate against exact rational cell edges.
    fn subdivision_oracle(lat: f64, lon: f64, level: u8) -> GridCode {
        let (lat, lon) = (exact(lat), exact(lon));
        let q = |n: i128, d: i128| Q::new(n, d);
        let mut p = -200i32;
        while !(q(2 * p as i128, 3) <= lat && lat < q(2 * (p as i128 + 1), 3)) {
            p += 1;
        }
        let mut u = -200i32;
        while !(Q::from_integer(u as i128 + 100) <= lon && lon < Q::from_integer(u as i128 + 101)) {
            u += 1;
        }
        let (mut s, mut w) = (q(2 * p as i128, 3), Q::from_integer(u as i128 + 100));
        let (mut h, mut wd) = (q(2, 3), Q::from_integer(1));
        let mut pick = |n: i128| {
            h /= n;
            wd /= n;
            let mut r = 0;
            while r + 1 < n && lat >= s + h * (r + 1) {
                r += 1;
            }
            let mut c = 0;
            while c + 1 < n && lon >= w + wd * (c + 1) {
                c += 1;
            }
            s += h * r;
            w += wd * c;
            (r as u8, c as u8)
        };
        let (q2, v) = pick(8);
        let (e, f) = pick(10);
        let (a4, b4) = pick(2);
        let (a5, b5) = pick(2);
        let full = GridCode::new(5, p, u, q2, v, e, f, 1 + b4 + 2 * a4, 1 + b5 + 2 * a5).unwrap();
        full.ancestor(level).unwrap()
    }

    #[test]
    fn tokyo_station_level3() {
        let pt = GeoPoint::new(35.681236, 139.767125).unwrap();
        let c = encode_cell(&pt, 3, &BoundingBox::JAPAN).unwrap();
        assert_eq!((c.p(), c.u(), c.q(), c.v(), c.e(), c.f()), (53, 39, Some(4), Some(6), Some(1), Some(1)));
        assert_eq!(c.to_string(), "53-39-4-6-1-1");
        assert_eq!(c, subdivision_oracle(35.681236, 139.767125, 3));
    }

    #[test]
    fn tokyo_station_level5() {
        let pt = GeoPoint::new(35.681236, 139.767125).unwrap();
        let c = encode_cell(&pt, 5, &BoundingBox::JAPAN).unwrap();
        assert_eq!((c.q4(), c.q5()), (Some(3), Some(2)));
        assert_eq!(c, subdivision_oracle(35.681236, 139.767125, 5));
    }

    #[test]
    fn lower_edge_is_inclusive() {
        let pt = GeoPoint::new(36.0, 140.0).unwrap();
        let c = encode_cell(&pt, 1, &BoundingBox::JAPAN).unwrap();
        assert_eq!((c.p(), c.u()), (54, 40));
    }

    #[test]
    fn out_of_bounds_rejected() {
        let pt = GeoPoint::new(10.0, 139.0).unwrap();
        assert!(matches!(encode_cell(&pt, 3, &BoundingBox::JAPAN), Err(CodecError::OutOfBounds(_))));
        let edge = GeoPoint::new(46.0, 140.0).unwrap();
        assert!(encode_cell(&edge, 1, &BoundingBox::JAPAN).is_err());
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn level1_center() {
        let c = decode_center(&GridCode::level1(53, 39));
        assert!((c.lat() - 35.666_666_7).abs() < 1e-6);
        assert!((c.lon() - 139.5).abs() < 1e-12);
    }

    #[test]
    fn level5_cell_height() {
        let c = encode_cell(&GeoPoint::new(35.6, 139.9).unwrap(), 5, &BoundingBox::JAPAN).unwrap();
        let (_, _, h, w) = c.bounds();
        assert!((h - (1.0 / 1.5) / 8.0 / 10.0 / 2.0 / 2.0).abs() < 1e-15);
        assert!((h - 0.002_083_3).abs() < 1e-7);
        assert!((w - 0.003_125).abs() < 1e-15);
    }

    #[test]
    fn invalid_codes_rejected() {
        assert!(GridCode::new(2, 53, 39, 8, 0, 0, 0, 0, 0).is_err());
        assert!(GridCode::new(4, 53, 39, 1, 1, 1, 1, 5, 0).is_err());
        assert!(GridCode::new(3, 53, 39, 1, 1, 1, 1, 2, 0).is_err());
        assert!(GridCode::new(6, 53, 39, 1, 1, 1, 1, 2, 2).is_err());
    }

    #[test]
    fn matches_oracle_next_to_edges() {
        for k in (35 * 480..35 * 480 + 400).step_by(7) {
            let edge = k as f64 / 480.0;
            for lat in [edge, f64::from_bits(edge.to_bits() - 1), f64::from_bits(edge.to_bits() + 1)] {
                let pt = GeoPoint::new(lat, 139.9).unwrap();
                assert_eq!(encode_cell(&pt, 5, &BoundingBox::JAPAN).unwrap(), subdivision_oracle(lat, 139.9, 5));
            }
        }
    }

    #[test]
    fn matches_oracle_on_grid_of_points() {
        for i in 0..187 {
            for j in 0..50 {
                let lat = 24.0 + i as f64 * 0.1173;
                let lon = 123.0 + j as f64 * 0.6071;
                let pt = GeoPoint::new(lat, lon).unwrap();
                for level in 1..=5 {
                    assert_eq!(encode_cell(&pt, level, &BoundingBox::JAPAN).unwrap(), subdivision_oracle(lat, lon, level));
                }
            }
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn center_roundtrip(lat in 20.0f64..46.0, lon in 122.0f64..154.0, level in 1u8..=5) {
                let pt = GeoPoint::new(lat, lon).unwrap();
                let code = encode_cell(&pt, level, &BoundingBox::JAPAN).unwrap();
                let center = decode_center(&code);
                prop_assert_eq!(encode_cell(&center, level, &BoundingBox::JAPAN).unwrap(), code);
                let (s, w, h, wd) = code.bounds();
                prop_assert!(lat >= s - 1e-9 && lat < s + h + 1e-9);
                prop_assert!(lon >= w - 1e-9 && lon < w + wd + 1e-9);
            }

            #[test]
            fn levels_nest(lat in 20.0f64..46.0, lon in 122.0f64..154.0) {
                let pt = GeoPoint::new(lat, lon).unwrap();
                let fine = encode_cell(&pt, 5, &BoundingBox::JAPAN).unwrap();
                for level in 1..5 {
                    prop_assert_eq!(fine.ancestor(level).unwrap(), encode_cell(&pt, level, &BoundingBox::JAPAN).unwrap());
                }
            }
        }
    }
}
