use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One slide: its instances and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub slide_id: String,
    pub patient_id: String,
    /// `N×d` instance features.
    pub features: Tensor,
    /// Instance centroids `(p_x, p_y)` in pixels.
    pub centroids: Vec<(f64, f64)>,
    pub instance_labels: Option<Vec<usize>>,
    /// Multi-hot slide target over the class set.
    pub slide_label: Vec<u8>,
    /// Superpixel id each instance came from.
    pub region_ids: Vec<u32>,
}

impl Bag {
    pub fn new(
        slide_id: impl Into<String>,
        patient_id: impl Into<String>,
        features: Tensor,
        centroids: Vec<(f64, f64)>,
        instance_labels: Option<Vec<usize>>,
        slide_label: Vec<u8>,
        region_ids: Vec<u32>,
    ) -> Result<Self> {
        let (n, _) = match features.shape() {
            [n, d] => (*n, *d),
            other => return Err(Error::Argument(format!("bag features must be N×d, got {other:?}"))),
        };
        if !features.is_finite() {
            return Err(Error::Argument("bag features contain non-finite values".into()));
        }
        if centroids.len() != n || region_ids.len() != n {
            return Err(Error::Argument(format!(
                "{n} instances but {} centroids and {} region ids",
                centroids.len(),
                region_ids.len()
            )));
        }
        validate_slide_label(&slide_label)?;
        if let Some(labels) = &instance_labels {
            if labels.len() != n {
                return Err(Error::Argument(format!(
                    "{n} instances but {} instance labels",
                    labels.len()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= slide_label.len()) {
                return Err(Error::Argument(format!("instance label {bad} outside the class set")));
            }
        }
        Ok(Self {
            slide_id: slide_id.into(),
            patient_id: patient_id.into(),
            features,
            centroids,
            instance_labels,
            slide_label,
            region_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn class_count(&self) -> usize {
        self.slide_label.len()
    }

    /// Multi-hot vector of the classes among the instance labels.
    pub fn label_union(&self) -> Option<Vec<u8>> {
        self.instance_labels.as_ref().map(|labels| {
            let mut out = vec![0u8; self.slide_label.len()];
            for &l in labels {
                out[l] = 1;
            }
            out
        })
    }
}

pub fn validate_slide_label(label: &[u8]) -> Result<()> {
    if label.is_empty() {
        return Err(Error::Argument("slide label is empty".into()));
    }
    if label.iter().any(|&v| v > 1) {
        return Err(Error::Argument(format!("slide label {label:?} is not binary")));
    }
    if !label.contains(&1) {
        return Err(Error::Argument("slide label has no positive class".into()));
    }
    Ok(())
}
