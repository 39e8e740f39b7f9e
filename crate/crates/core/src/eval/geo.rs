use crate::codec::GeoPoint;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance in kilometres.
pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (la1, la2) = (a.lat().to_radians(), b.lat().to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon() - a.lon()).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn one_degree_of_longitude() {
        // Spherical law of cosines as an independent formula.
        let (phi, dl) = (35f64.to_radians(), 1f64.to_radians());
        let c = phi.sin() * phi.sin() + phi.cos() * phi.cos() * dl.cos();
        let expected = EARTH_RADIUS_KM * c.acos();
        let d = haversine_km(&p(35.0, 139.0), &p(35.0, 140.0));
        assert!((d - expected).abs() < 1e-6);
        assert!((d - 91.085).abs() < 0.001);
    }

    #[test]
    fn zero_and_symmetry() {
        let (a, b) = (p(35.68, 139.76), p(34.70, 135.49));
        assert_eq!(haversine_km(&a, &a), 0.0);
        assert_eq!(haversine_km(&a, &b), haversine_km(&b, &a));
    }
}
