use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::trainmouse::VelocityEstimate;
use crate::{Error, Result};

/// Planar navigation state: position, direction of travel and speed, with a
/// 4x4 covariance in the order (x, y, heading, v).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub cov: Matrix4<f64>,
}

impl NavState {
    pub fn mean(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.heading, self.v)
    }

    fn with_mean(&self, m: &Vector4<f64>, cov: Matrix4<f64>) -> Self {
        NavState {
            t: self.t,
            x: m[0],
            y: m[1],
            heading: wrap_angle(m[2]),
            v: m[3],
            cov,
        }
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

/// Spectral densities of the random walks driving each state component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    /// m²/s
    pub position: f64,
    /// rad²/s
    pub heading: f64,
    /// (m/s)²/s
    pub speed: f64,
}

impl ProcessNoise {
    pub fn matrix(&self, dt: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(
            self.position,
            self.position,
            self.heading,
            self.speed,
        )) * dt
    }
}

/// Constant-velocity, constant-heading prediction over `dt` seconds.
pub fn kf_predict(state: &NavState, dt: f64, q: &ProcessNoise) -> Result<NavState> {
    if dt < 0.0 {
        return Err(Error::NonMonotonic {
            last: state.t,
            got: state.t + dt,
        });
    }
    if !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    let (s, c) = state.heading.sin_cos();
    let mut f = Matrix4::identity();
    f[(0, 2)] = -state.v * s * dt;
    f[(0, 3)] = c * dt;
    f[(1, 2)] = state.v * c * dt;
    f[(1, 3)] = s * dt;
    let cov = f * state.cov * f.transpose() + q.matrix(dt);
    Ok(NavState {
        t: state.t + dt,
        x: state.x + state.v * c * dt,
        y: state.y + state.v * s * dt,
        cov: 0.5 * (cov + cov.transpose()),
        ..*state
    })
}

/// An absolute heading observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingMeasurement {
    pub value: f64,
    pub variance: f64,
}

/// Heading after a frame: the previous heading advanced by the measured yaw
/// increment and corrected by the slip angle. The variance combines the
/// yaw-increment variance with the lateral scatter over the step length.
pub fn heading_measurement(
    previous_heading: f64,
    yaw_increment: f64,
    velocity: &VelocityEstimate,
    yaw_variance: f64,
    lateral_variance: f64,
    step_length: f64,
    floor: f64,
) -> HeadingMeasurement {
    let slip = velocity.v_s.atan2(velocity.v_l.abs().max(1e-12));
    let geometric = if step_length > 0.0 {
        lateral_variance / (step_length * step_length)
    } else {
        f64::INFINITY
    };
    HeadingMeasurement {
        value: wrap_angle(previous_heading + yaw_increment + slip),
        variance: yaw_variance + geometric + floor,
    }
}

fn check_variance(v: f64) -> Result<()> {
    if v.is_nan() || v < 0.0 {
        return Err(Error::InvalidMeasurement(format!(
            "variance {v} is not non-negative"
        )));
    }
    Ok(())
}

/// Joseph-form update with rows of the identity observation model picking
/// state components `idx`. Angle components in `idx` have their innovation
/// wrapped. Returns the updated state and the squared Mahalanobis distance.
pub(crate) fn joseph_update(
    state: &NavState,
    idx: &[usize],
    z: &[f64],
    r: &DMatrix<f64>,
) -> Result<(NavState, f64)> {
    let m = idx.len();
    if m == 0 {
        return Ok((*state, 0.0));
    }
    let x = state.mean();
    let mut h = DMatrix::<f64>::zeros(m, 4);
    let mut nu = DVector::<f64>::zeros(m);
    for (row, (&i, &zi)) in idx.iter().zip(z).enumerate() {
        h[(row, i)] = 1.0;
        nu[row] = if i == 2 {
            wrap_angle(zi - x[i])
        } else {
            zi - x[i]
        };
    }
    let p = DMatrix::from_column_slice(4, 4, state.cov.as_slice());
    let s = &h * &p * h.transpose() + r;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidMeasurement("innovation covariance is singular".into()))?;
    let d2 = (nu.transpose() * &s_inv * &nu)[(0, 0)];
    let k = &p * h.transpose() * &s_inv;
    let dx = &k * &nu;
    let i_kh = DMatrix::<f64>::identity(4, 4) - &k * &h;
    let pn = &i_kh * &p * i_kh.transpose() + &k * r * k.transpose();
    let pn = Matrix4::from_column_slice(pn.as_slice());
    let mean = x + Vector4::from_column_slice(dx.as_slice());
    Ok((state.with_mean(&mean, 0.5 * (pn + pn.transpose())), d2))
}

/// Updates speed (and optionally heading) from the correlation unit.
/// Infinite variances make the component uninformative.
pub fn kf_update_velocity(
    state: &NavState,
    meas: &VelocityEstimate,
    heading: Option<HeadingMeasurement>,
) -> Result<NavState> {
    let var_v = meas.sigma_vz * meas.sigma_vz;
    check_variance(var_v)?;
    if !meas.v_l.is_finite() {
        return Err(Error::InvalidMeasurement(format!("speed {}", meas.v_l)));
    }
    let mut idx = Vec::new();
    let mut z = Vec::new();
    let mut var = Vec::new();
    if var_v.is_finite() {
        idx.push(3);
        z.push(meas.v_l);
        var.push(var_v);
    }
    if let Some(hm) = heading {
        check_variance(hm.variance)?;
        if !hm.value.is_finite() {
            return Err(Error::InvalidMeasurement(format!("heading {}", hm.value)));
        }
        if hm.variance.is_finite() {
            idx.push(2);
            z.push(hm.value);
            var.push(hm.variance);
        }
    }
    let r = DMatrix::from_diagonal(&DVector::from_vec(var));
    Ok(joseph_update(state, &idx, &z, &r)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(v: f64, cov: Matrix4<f64>) -> NavState {
        NavState {
            t: 0.0,
            x: 1.0,
            y: 2.0,
            heading: 0.3,
            v,
            cov,
        }
    }

    const Q: ProcessNoise = ProcessNoise {
        position: 0.01,
        heading: 1e-4,
        speed: 0.5,
    };

    #[test]
    fn standing_still_grows_by_process_noise() {
        let s = kf_predict(&state(0.0, Matrix4::zeros()), 0.5, &Q).unwrap();
        assert_eq!((s.x, s.y), (1.0, 2.0));
        assert!((s.cov - Q.matrix(0.5)).norm() < 1e-15);
        assert!(matches!(
            kf_predict(&s, -0.1, &Q),
            Err(Error::NonMonotonic { .. })
        ));
    }

    #[test]
    fn exact_speed_measurement() {
        let s = state(3.0, Matrix4::identity());
        let m = VelocityEstimate {
            v_l: 5.0,
            v_s: 0.0,
            sigma_vz: 0.0,
        };
        let u = kf_update_velocity(&s, &m, None).unwrap();
        assert!((u.v - 5.0).abs() < 1e-12);
        let m = VelocityEstimate {
            v_l: 5.0,
            v_s: 0.0,
            sigma_vz: f64::INFINITY,
        };
        assert_eq!(kf_update_velocity(&s, &m, None).unwrap(), s);
        let m = VelocityEstimate {
            v_l: 5.0,
            v_s: 0.0,
            sigma_vz: 1e150,
        };
        let u = kf_update_velocity(&s, &m, None).unwrap();
        assert!((u.v - 3.0).abs() < 1e-12);
        let bad = HeadingMeasurement {
            value: 0.0,
            variance: -1.0,
        };
        let m = VelocityEstimate {
            v_l: 5.0,
            v_s: 0.0,
            sigma_vz: 0.1,
        };
        assert!(matches!(
            kf_update_velocity(&s, &m, Some(bad)),
            Err(Error::InvalidMeasurement(_))
        ));
    }

    #[test]
    fn heading_innovation_wraps() {
        let mut s = state(1.0, Matrix4::identity());
        s.heading = 3.1;
        let m = VelocityEstimate {
            v_l: 1.0,
            v_s: 0.0,
            sigma_vz: 0.1,
        };
        let h = HeadingMeasurement {
            value: -3.1,
            variance: 1.0,
        };
        let u = kf_update_velocity(&s, &m, Some(h)).unwrap();
        // Halfway along the short arc through pi.
        assert!((u.heading.abs() - std::f64::consts::PI).abs() < 1e-3);
    }

    #[test]
    fn heading_measurement_terms() {
        let v = VelocityEstimate {
            v_l: 10.0,
            v_s: 0.0,
            sigma_vz: 0.1,
        };
        let h = heading_measurement(0.1, 0.02, &v, 1e-6, 4e-4, 0.2, 1e-8);
        assert!((h.value - 0.12).abs() < 1e-15);
        assert!((h.variance - (1e-6 + 1e-2 + 1e-8)).abs() < 1e-15);
    }

    fn arb_cov() -> impl Strategy<Value = Matrix4<f64>> {
        proptest::collection::vec(-1.0..1.0f64, 16).prop_map(|v| {
            let a = Matrix4::from_column_slice(&v);
            a * a.transpose() + Matrix4::identity() * 1e-3
        })
    }

    proptest! {
        #[test]
        fn covariance_stays_psd(cov in arb_cov(), dt in 0.0..1.0f64, v in -20.0..20.0f64,
                                 mv in -20.0..20.0f64, sv in 0.0..2.0f64, hv in 1e-6..1.0f64) {
            let s = kf_predict(&state(v, cov), dt, &Q).unwrap();
            let m = VelocityEstimate { v_l: mv, v_s: 0.1, sigma_vz: sv };
            let u = kf_update_velocity(&s, &m, Some(HeadingMeasurement { value: 0.2, variance: hv })).unwrap();
            let eig = u.cov.symmetric_eigenvalues();
            prop_assert!(eig.min() >= -1e-9 * eig.max());
            prop_assert!((u.cov - u.cov.transpose()).norm() == 0.0);
        }

        #[test]
        fn prediction_mean_is_a_semigroup(v in -20.0..20.0f64, h in -3.0..3.0f64, dt in 0.0..2.0f64) {
            let s = NavState { heading: h, ..state(v, Matrix4::identity()) };
            let one = kf_predict(&s, dt, &Q).unwrap();
            let two = kf_predict(&kf_predict(&s, dt / 2.0, &Q).unwrap(), dt / 2.0, &Q).unwrap();
            prop_assert!((one.mean() - two.mean()).norm() < 1e-9);
        }
    }
}
