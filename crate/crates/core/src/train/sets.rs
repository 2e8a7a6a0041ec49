use rand_chacha::ChaCha8Rng;

use super::engine::TrainSet;
use crate::data::{augment, center_fraction_indices, resize_slice, strided_sample, AugmentationSpec, CtVolume, Label};
use crate::error::{Error, Result};

fn label_of(v: &CtVolume) -> Result<Label> {
    v.label
        .ok_or_else(|| Error::Data(format!("training scan `{}` has no label", v.id)))
}

fn to_size(slice: &[f32], hw: (usize, usize), target: (usize, usize)) -> Vec<f32> {
    if hw == target {
        slice.to_vec()
    } else {
        resize_slice(slice, hw, target)
    }
}

/// Scan-level examples: a fresh random strided window per epoch, augmented
/// as one sub-volume, resized to the model input.
pub struct ScanSet<'a> {
    pub volumes: &'a [CtVolume],
    pub slices: usize,
    pub stride: usize,
    pub input_hw: (usize, usize),
    pub augmentation: AugmentationSpec,
}

impl<'a> ScanSet<'a> {
    pub fn new(volumes: &'a [CtVolume], slices: usize, stride: usize, input_hw: (usize, usize), augmentation: AugmentationSpec) -> Result<Self> {
        augmentation.validate()?;
        volumes.iter().try_for_each(|v| label_of(v).map(drop))?;
        Ok(ScanSet {
            volumes,
            slices,
            stride,
            input_hw,
            augmentation,
        })
    }
}

impl TrainSet<Vec<Vec<f32>>> for ScanSet<'_> {
    fn len(&self) -> usize {
        self.volumes.len()
    }

    fn example(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<Vec<f32>>, Label)> {
        let v = &self.volumes[index];
        let hw = (v.height(), v.width());
        let idx = strided_sample(v.depth(), self.slices, self.stride, rng);
        let picked = idx.iter().map(|&i| v.slice(i).to_vec()).collect();
        let sub = CtVolume::from_slices(v.id.clone(), picked, hw, v.label)?;
        let sub = augment(&sub, &self.augmentation, rng)?;
        let input = sub.slices().map(|s| to_size(s, hw, self.input_hw)).collect();
        Ok((input, label_of(v)?))
    }
}

/// Slice-level examples: every slice in the central training window of
/// every scan, each labeled with its scan's label.
pub struct SliceSet<'a> {
    pub volumes: &'a [CtVolume],
    pub items: Vec<(usize, usize)>,
    pub input_hw: (usize, usize),
    pub augmentation: AugmentationSpec,
}

impl<'a> SliceSet<'a> {
    pub fn new(volumes: &'a [CtVolume], fraction: f64, input_hw: (usize, usize), augmentation: AugmentationSpec) -> Result<Self> {
        augmentation.validate()?;
        let mut items = Vec::new();
        for (vi, v) in volumes.iter().enumerate() {
            label_of(v)?;
            items.extend(center_fraction_indices(v.depth(), fraction)?.map(|s| (vi, s)));
        }
        Ok(SliceSet {
            volumes,
            items,
            input_hw,
            augmentation,
        })
    }
}

impl TrainSet<Vec<f32>> for SliceSet<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn example(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f32>, Label)> {
        let (vi, si) = self.items[index];
        let v = &self.volumes[vi];
        let hw = (v.height(), v.width());
        let one = CtVolume::from_slices(v.id.clone(), vec![v.slice(si).to_vec()], hw, v.label)?;
        let one = augment(&one, &self.augmentation, rng)?;
        Ok((to_size(one.slice(0), hw, self.input_hw), label_of(v)?))
    }
}
