use crate::tasks::{Body, Frame};
use crate::{Error, Result};

/// Anything that maps the current frame to a predicted next frame, possibly
/// carrying recurrent state between calls.
pub trait Dynamics {
    fn reset(&mut self);
    fn step(&mut self, frame: &[Body]) -> Result<Frame>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub frames: Vec<Frame>,
    /// Set when a prediction went non-finite and the rollout was cut short.
    pub error: Option<String>,
}

impl Rollout {
    pub fn is_complete(&self, horizon: usize) -> bool {
        self.error.is_none() && self.frames.len() == horizon
    }
}

fn finite(frame: &[Body]) -> bool {
    frame.iter().flatten().all(|v| v.is_finite())
}

/// Warms up on `window`, then feeds predictions back for `horizon` frames.
pub fn rollout<D: Dynamics>(model: &mut D, window: &[Frame], horizon: usize) -> Result<Rollout> {
    if window.is_empty() {
        return Err(Error::InvalidArgument(
            "rollout needs a non-empty initial window".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument(
            "rollout horizon must be at least 1".into(),
        ));
    }
    model.reset();
    let mut next = None;
    for f in window {
        next = Some(model.step(f)?);
    }
    let mut frames = Vec::with_capacity(horizon);
    let mut current = next.expect("window is non-empty");
    loop {
        if !finite(&current) {
            let error = Some(format!("non-finite prediction at step {}", frames.len()));
            return Ok(Rollout { frames, error });
        }
        frames.push(current);
        if frames.len() == horizon {
            return Ok(Rollout {
                frames,
                error: None,
            });
        }
        current = match model.step(frames.last().expect("just pushed")) {
            Ok(f) => f,
            Err(e) => {
                return Ok(Rollout {
                    frames,
                    error: Some(e.to_string()),
                })
            }
        };
    }
}

/// Mean squared error over the frames both sequences share.
pub fn rollout_mse(predicted: &[Frame], truth: &[Frame]) -> Result<f64> {
    let n = predicted.len().min(truth.len());
    if n == 0 {
        return Err(Error::InvalidArgument("no overlapping frames".into()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (p, t) in predicted[..n].iter().zip(&truth[..n]) {
        if p.len() != t.len() {
            return Err(Error::Shape(format!("{} vs {} bodies", p.len(), t.len())));
        }
        for (a, b) in p.iter().flatten().zip(t.iter().flatten()) {
            sum += (a - b).powi(2);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}
