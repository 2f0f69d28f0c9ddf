use nalgebra::Point3;
use rayon::prelude::*;

use super::{ModelError, NgcModel};
use crate::geometry::{GeneralizedCylinder, RelativeCoords};
use crate::nn::Scalar;

/// Value returned for points outside every GC.
pub const OUTSIDE_SDF: f64 = 0.1;

/// One shape: its GCs and the latent code each one uses.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: String,
    pub gcs: Vec<GeneralizedCylinder>,
    pub latents: Vec<usize>,
}

impl Scene {
    /// Assigns consecutive latents starting at `first_latent`.
    pub fn new(id: impl Into<String>, gcs: Vec<GeneralizedCylinder>, first_latent: usize) -> Self {
        let latents = (first_latent..first_latent + gcs.len()).collect();
        Self { id: id.into(), gcs, latents }
    }

    pub fn latent_of(&self, gc: usize) -> Result<usize, ModelError> {
        self.latents.get(gc).copied().ok_or(ModelError::BadIndex { index: gc, count: self.latents.len() })
    }

    /// In-volume closest-point candidates of `q` for every GC, as
    /// `(gc index, coordinates)`.
    pub fn candidates(&self, q: &Point3<f64>) -> Vec<(usize, RelativeCoords)> {
        self.gcs
            .iter()
            .enumerate()
            .flat_map(|(i, gc)| gc.world_to_relative(q).into_iter().filter(|c| c.in_volume()).map(move |c| (i, c.coords)))
            .collect()
    }

    /// Signed distance at relative coordinates of one GC. Depends only on the
    /// coordinates and the GC's latent, never on the GC's geometry.
    pub fn query_relative<S: Scalar>(&self, model: &NgcModel<S>, gc: usize, rc: &RelativeCoords) -> Result<S, ModelError> {
        model.query_relative(self.latent_of(gc)?, rc)
    }

    /// Minimum over one GC's in-volume candidates, if any.
    pub fn query_gc<S: Scalar>(&self, model: &NgcModel<S>, gc: usize, q: &Point3<f64>) -> Result<Option<S>, ModelError> {
        let latent = self.latent_of(gc)?;
        let queries: Vec<(usize, RelativeCoords)> = self.gcs[gc]
            .world_to_relative(q)
            .into_iter()
            .filter(|c| c.in_volume())
            .map(|c| (latent, c.coords))
            .collect();
        Ok(model.query_relative_batch(&queries)?.into_iter().reduce(S::min))
    }

    /// Union of all GCs: the minimum over every containing GC and tied
    /// candidate, or [`OUTSIDE_SDF`] when no GC contains `q`.
    pub fn query_world<S: Scalar>(&self, model: &NgcModel<S>, q: &Point3<f64>) -> Result<S, ModelError> {
        Ok(self.query_world_batch(model, std::slice::from_ref(q))?[0])
    }

    /// Batched [`Scene::query_world`].
    pub fn query_world_batch<S: Scalar>(&self, model: &NgcModel<S>, points: &[Point3<f64>]) -> Result<Vec<S>, ModelError> {
        self.query_world_with(points, |queries| model.query_relative_batch(queries))
    }

    /// World query with a custom relative-coordinate field; `eval` receives
    /// `(latent, coords)` rows and returns one value per row.
    pub fn query_world_with<S, F>(&self, points: &[Point3<f64>], eval: F) -> Result<Vec<S>, ModelError>
    where
        S: Scalar,
        F: Fn(&[(usize, RelativeCoords)]) -> Result<Vec<S>, ModelError> + Sync,
    {
        if self.latents.len() != self.gcs.len() {
            return Err(ModelError::InvalidConfig("scene needs one latent per GC".into()));
        }
        let per_point: Vec<Vec<(usize, RelativeCoords)>> = points
            .par_iter()
            .map(|q| self.candidates(q).into_iter().map(|(gc, rc)| (self.latents[gc], rc)).collect())
            .collect();
        let flat: Vec<(usize, RelativeCoords)> = per_point.iter().flatten().copied().collect();
        let values = eval(&flat)?;
        let mut out = Vec::with_capacity(points.len());
        let mut k = 0;
        for cands in &per_point {
            let v = values[k..k + cands.len()].iter().copied().reduce(S::min).unwrap_or_else(|| S::lit(OUTSIDE_SDF));
            k += cands.len();
            out.push(v);
        }
        Ok(out)
    }
}
