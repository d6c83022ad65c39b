use super::{GeometryError, SimilarityTransform, Vec2};

/// Closed-form least-squares similarity and its residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityFit {
    pub transform: SimilarityTransform,
    pub rms: f64,
}

fn centroid(points: &[Vec2]) -> Vec2 {
    let n = points.len() as f64;
    let s = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
    Vec2::new(s.x / n, s.y / n)
}

/// Least-squares similarity mapping `src[i]` onto `dst[i]`.
///
/// Both sets are centred; the rotation follows from the summed dot and cross
/// products of the centred pairs, and the scale from their magnitude over the
/// source spread. Fails when either set collapses to a single point.
pub fn fit_similarity(src: &[Vec2], dst: &[Vec2]) -> Result<SimilarityFit, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 2 {
        return Err(GeometryError::TooFewPoints {
            needed: 2,
            got: src.len(),
        });
    }
    let mu_s = centroid(src);
    let mu_d = centroid(dst);
    let (mut dot, mut cross, mut spread) = (0.0, 0.0, 0.0);
    for (&p, &q) in src.iter().zip(dst) {
        let p = p - mu_s;
        let q = q - mu_d;
        dot += p.dot(q);
        cross += p.cross(q);
        spread += p.dot(p);
    }
    if spread <= f64::EPSILON * f64::EPSILON {
        return Err(GeometryError::RankDeficient);
    }
    let scale = dot.hypot(cross) / spread;
    if scale <= 0.0 {
        return Err(GeometryError::RankDeficient);
    }
    let rot = cross.atan2(dot);
    let t = mu_d - mu_s.rotate(rot) * scale;
    let transform = SimilarityTransform {
        tx: t.x,
        ty: t.y,
        rot,
        scale,
    };
    let sq: f64 = src
        .iter()
        .zip(dst)
        .map(|(&p, &q)| {
            let r = q - transform.apply(p);
            r.dot(r)
        })
        .sum();
    Ok(SimilarityFit {
        transform,
        rms: (sq / src.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square() -> Vec<Vec2> {
        vec![
            Vec2::new(10.0, 10.0),
            Vec2::new(40.0, 12.0),
            Vec2::new(38.0, 45.0),
            Vec2::new(8.0, 41.0),
        ]
    }

    #[test]
    fn pure_translation() {
        let src = square();
        let dst: Vec<_> = src.iter().map(|&p| p + Vec2::new(3.0, 4.0)).collect();
        let fit = fit_similarity(&src, &dst).unwrap();
        let t = fit.transform;
        assert!((t.tx - 3.0).abs() < 1e-9 && (t.ty - 4.0).abs() < 1e-9);
        assert!(t.rot.abs() < 1e-9 && (t.scale - 1.0).abs() < 1e-9);
        assert!(fit.rms < 1e-9);
    }

    #[test]
    fn rotation_about_centroid() {
        let src = square();
        let c = centroid(&src);
        let dst: Vec<_> = src.iter().map(|&p| c + (p - c).rotate(PI / 6.0)).collect();
        let fit = fit_similarity(&src, &dst).unwrap();
        assert!((fit.transform.rot - PI / 6.0).abs() < 1e-9);
        assert!((fit.transform.scale - 1.0).abs() < 1e-9);
        assert!(fit.rms < 1e-9);
    }

    #[test]
    fn coincident_sources_rejected() {
        let src = vec![Vec2::new(1.0, 1.0); 3];
        let dst = square()[..3].to_vec();
        assert_eq!(fit_similarity(&src, &dst), Err(GeometryError::RankDeficient));
    }

    #[test]
    fn length_and_count_checks() {
        let s = square();
        assert!(matches!(
            fit_similarity(&s, &s[..3]),
            Err(GeometryError::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_similarity(&s[..1], &s[..1]),
            Err(GeometryError::TooFewPoints { .. })
        ));
    }
}
