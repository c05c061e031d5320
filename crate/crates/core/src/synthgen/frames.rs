use serde::{Deserialize, Serialize};

/// Uniformly spaced frame indices for one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePlan {
    pub video_id: String,
    pub total_frames: u32,
    pub sample_count: u32,
    pub indices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FramePlanError {
    #[error("total_frames must be at least 1")]
    NoFrames,
    #[error("sample_count must be at least 1")]
    NoSamples,
}

/// `indices[t] = floor(t * total_frames / sample_count)`, clamped to the last
/// frame. Short videos repeat frames instead of failing.
pub fn plan_frames(
    video_id: &str,
    total_frames: u32,
    sample_count: u32,
) -> Result<FramePlan, FramePlanError> {
    if total_frames == 0 {
        return Err(FramePlanError::NoFrames);
    }
    if sample_count == 0 {
        return Err(FramePlanError::NoSamples);
    }
    let n = u64::from(total_frames);
    let t_count = u64::from(sample_count);
    let indices = (0..t_count)
        .map(|t| ((t * n / t_count).min(n - 1)) as u32)
        .collect();
    Ok(FramePlan {
        video_id: video_id.to_string(),
        total_frames,
        sample_count,
        indices,
    })
}

impl FramePlan {
    /// Up to four evenly placed indices (first, one third, two thirds, last)
    /// for thumbnail strips.
    pub fn thumbnail_indices(&self) -> Vec<u32> {
        let t = self.indices.len();
        if t == 0 {
            return Vec::new();
        }
        let mut picks: Vec<usize> = vec![0, t / 3, 2 * t / 3, t - 1];
        picks.dedup();
        picks.into_iter().map(|i| self.indices[i]).collect()
    }
}
