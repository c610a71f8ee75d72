//! Low-precision solar ephemeris.
//!
//! Uses the NOAA fractional-year Fourier series for the declination and the
//! equation of time, then the standard hour-angle construction. Accuracy is a
//! few hundredths of a degree in declination and well under half a degree in
//! direction between 1950 and 2100, which is all novel-sun rendering needs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::date::UtcDateTime;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Geographic observer location in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub latitude: f64,
    pub longitude: f64,
}

impl Site {
    /// Omaha, Nebraska.
    pub const OMAHA: Site = Site {
        latitude: 41.26,
        longitude: -95.93,
    };

    /// Validates latitude and wraps longitude to `(-180, 180]`.
    pub fn new(latitude: f64, longitude: f64) -> Result<Self> {
        if !latitude.is_finite() || latitude.abs() > 90.0 {
            return Err(Error::validation("latitude", format!("{latitude}")));
        }
        if !longitude.is_finite() {
            return Err(Error::validation("longitude", format!("{longitude}")));
        }
        Ok(Site {
            latitude,
            longitude: wrap_longitude(longitude),
        })
    }
}

pub fn wrap_longitude(lon: f64) -> f64 {
    let mut w = crate::math::rem_euclid(lon + 180.0, 360.0) - 180.0;
    if w == -180.0 {
        w = 180.0;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarQuery {
    pub instant: UtcDateTime,
    pub site: Site,
}

/// Intermediate almanac quantities for one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarAngles {
    pub declination_deg: f64,
    pub equation_of_time_min: f64,
    pub hour_angle_deg: f64,
}

fn check_window(instant: &UtcDateTime) -> Result<()> {
    if !(1950..=2100).contains(&instant.year) {
        return Err(Error::validation(
            "instant",
            format!("year {} outside 1950..=2100", instant.year),
        ));
    }
    Ok(())
}

/// Days from the Unix epoch to 2000-01-01 00:00 UTC.
const ANCHOR_DAYS: f64 = 10_957.0;
const TROPICAL_YEAR_DAYS: f64 = 365.2422;

/// Phase of the Fourier series in radians. It advances with elapsed time in
/// tropical years from a fixed anchor instead of the calendar day of year,
/// so leap-day and Gregorian drift does not accumulate across the window.
fn fractional_year(instant: &UtcDateTime) -> f64 {
    let years = (instant.days_since_unix_epoch() - ANCHOR_DAYS) / TROPICAL_YEAR_DAYS;
    2.0 * PI * crate::math::rem_euclid(years, 1.0)
}

pub fn solar_angles(query: &SolarQuery) -> Result<SolarAngles> {
    check_window(&query.instant)?;
    let g = fractional_year(&query.instant);
    let (s1, c1) = libm::sincos(g);
    let (s2, c2) = libm::sincos(2.0 * g);
    let (s3, c3) = libm::sincos(3.0 * g);
    let eot = 229.18 * (0.000075 + 0.001868 * c1 - 0.032077 * s1 - 0.014615 * c2 - 0.040849 * s2);
    let decl = 0.006918 - 0.399912 * c1 + 0.070257 * s1 - 0.006758 * c2 + 0.000907 * s2
        - 0.002697 * c3
        + 0.00148 * s3;
    let true_solar_min = query.instant.hours_of_day() * 60.0 + eot + 4.0 * query.site.longitude;
    Ok(SolarAngles {
        declination_deg: decl.to_degrees(),
        equation_of_time_min: eot,
        hour_angle_deg: true_solar_min / 4.0 - 180.0,
    })
}

/// Unit vector from the ground toward the Sun in east/north/up coordinates.
pub fn sun_direction(query: &SolarQuery) -> Result<Vec3> {
    let angles = solar_angles(query)?;
    let (sd, cd) = libm::sincos(angles.declination_deg.to_radians());
    let (sh, ch) = libm::sincos(angles.hour_angle_deg.to_radians());
    let (sp, cp) = libm::sincos(query.site.latitude.to_radians());
    let v = [-cd * sh, cp * sd - sp * cd * ch, sp * sd + cp * cd * ch];
    // Already unit up to rounding; renormalize so the norm contract is tight.
    Ok(crate::math::normalize(v))
}

/// Convert azimuth (clockwise from north) and elevation, both in degrees, to ENU.
pub fn enu_from_azimuth_elevation(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (sa, ca) = libm::sincos(azimuth_deg.to_radians());
    let (se, ce) = libm::sincos(elevation_deg.to_radians());
    crate::math::normalize([ce * sa, ce * ca, se])
}

/// Inverse of [`enu_from_azimuth_elevation`]; azimuth in `[0, 360)`.
pub fn azimuth_elevation_from_enu(v: Vec3) -> (f64, f64) {
    let v = crate::math::normalize(v);
    let elevation = libm::asin(v[2].clamp(-1.0, 1.0)).to_degrees();
    let azimuth = crate::math::rem_euclid(libm::atan2(v[0], v[1]).to_degrees(), 360.0);
    (azimuth, elevation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub instant: UtcDateTime,
    pub direction: Vec3,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

/// Sun directions for several days of one month at a fixed UTC time of day.
pub fn sun_sweep(
    year: i32,
    month: u8,
    days: &[u8],
    hour: u8,
    minute: u8,
    site: Site,
) -> Result<Vec<SweepEntry>> {
    days.iter()
        .map(|&day| {
            let instant = UtcDateTime::ymd_hm(year, month, day, hour, minute)?;
            let direction = sun_direction(&SolarQuery { instant, site })?;
            let (azimuth_deg, elevation_deg) = azimuth_elevation_from_enu(direction);
            Ok(SweepEntry {
                label: format!("{year:04}-{month:02}-{day:02}T{hour:02}:{minute:02}Z"),
                instant,
                direction,
                azimuth_deg,
                elevation_deg,
            })
        })
        .collect()
}
