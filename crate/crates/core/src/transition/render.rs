use super::{ContextFrame, TransitionPlan};
use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// Fade-out and fade-in gains at overlap sample `n` of `len`:
/// `(√(1 − u), √u)` with `u = (n + ½) / len`. Their squares sum to one.
pub fn equal_power_weights(n: usize, len: usize) -> (f64, f64) {
    let u = (n as f64 + 0.5) / len as f64;
    ((1.0 - u).sqrt(), u.sqrt())
}

/// Splices `query` into `matched` according to `plan`.
///
/// The output runs from the start of the query frame to the query cut and
/// continues from the match cut to the end of the match frame. A crossfade
/// of `L` samples is centered on the cut: `L/2` samples before it and the
/// rest after, reading the query past its cut and the match before its cut
/// from the surrounding source audio. Output length is always
/// `query_cut + matched.len() - match_cut`. Samples are clipped to `[-1, 1]`.
pub fn render(query: &ContextFrame, matched: &ContextFrame, plan: &TransitionPlan) -> Result<AudioClip> {
    let sr = query.source().sample_rate();
    if matched.source().sample_rate() != sr {
        return Err(Error::InvalidArgument("query and match sample rates differ".into()));
    }
    if plan.query_cut > query.len() {
        return Err(Error::CutOutOfRange {
            cut: plan.query_cut,
            len: query.len(),
        });
    }
    if plan.match_cut > matched.len() {
        return Err(Error::CutOutOfRange {
            cut: plan.match_cut,
            len: matched.len(),
        });
    }
    if plan.crossfade_s.is_nan() || plan.crossfade_s < 0.0 {
        return Err(Error::InvalidArgument(format!("crossfade {} s", plan.crossfade_s)));
    }
    let overlap = (plan.crossfade_s * sr as f64).round() as usize;
    let before = overlap / 2;
    let after = overlap - before;

    let q_src = query.source().samples();
    let m_src = matched.source().samples();
    let q_abs = query.start() + plan.query_cut;
    let m_abs = matched.start() + plan.match_cut;
    let room = [
        plan.query_cut,
        q_src.len() - q_abs,
        m_abs,
        matched.len() - plan.match_cut,
    ];
    if before > room[0] || after > room[1] || before > room[2] || after > room[3] {
        return Err(Error::CrossfadeTooLong {
            needed: overlap,
            available: 2 * room.into_iter().min().unwrap_or(0),
        });
    }

    let mut out = Vec::with_capacity(plan.query_cut + matched.len() - plan.match_cut);
    out.extend_from_slice(&q_src[query.start()..q_abs - before]);
    let q_fade = &q_src[q_abs - before..q_abs + after];
    let m_fade = &m_src[m_abs - before..m_abs + after];
    for (n, (&a, &b)) in q_fade.iter().zip(m_fade).enumerate() {
        let (w_out, w_in) = equal_power_weights(n, overlap);
        out.push((a as f64 * w_out + b as f64 * w_in) as f32);
    }
    out.extend_from_slice(&m_src[m_abs + after..matched.start() + matched.len()]);
    for s in &mut out {
        *s = s.clamp(-1.0, 1.0);
    }
    let offset = query.source().offset_s() + query.start() as f64 / sr as f64;
    AudioClip::new(
        out,
        sr,
        format!("{}+{}", query.source().source_id(), matched.source().source_id()),
        offset,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::SAMPLE_RATE;
    use crate::transition::Strategy;

    fn plan(query_cut: usize, match_cut: usize, crossfade_s: f64) -> TransitionPlan {
        TransitionPlan {
            strategy: Strategy::FixedCrossfade,
            cut_i: 0,
            cut_j: 0,
            query_cut,
            match_cut,
            crossfade_s,
            requested_s: crossfade_s,
            variance: None,
            phi: 8.0,
            sample_rate: SAMPLE_RATE,
        }
    }

    fn constant(v: f32, len: usize) -> AudioClip {
        AudioClip::new(vec![v; len], SAMPLE_RATE, "c", 0.0).unwrap()
    }

    #[test]
    fn weights_are_equal_power() {
        for len in [1, 2, 7, 480, 12000] {
            for n in 0..len {
                let (a, b) = equal_power_weights(n, len);
                assert!((a * a + b * b - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_of_silence() {
        let q = constant(0.0, 48000);
        let m = constant(0.0, 30000);
        let out = render(&ContextFrame::whole(&q), &ContextFrame::whole(&m), &plan(48000, 0, 0.0)).unwrap();
        assert_eq!(out.len(), 78000);
        assert!(out.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn constant_crossfade_follows_window_sum() {
        let src = constant(0.5, 3 * 48000);
        let frame = ContextFrame::new(&src, 48000, 48000).unwrap();
        let p = plan(24000, 24000, 0.1);
        let out = render(&frame, &frame, &p).unwrap();
        assert_eq!(out.len(), 24000 + 48000 - 24000);
        let overlap = 4800;
        let start = 24000 - overlap / 2;
        for n in 0..overlap {
            let (a, b) = equal_power_weights(n, overlap);
            let want = (0.5f64 * a + 0.5f64 * b) as f32;
            assert_eq!(out.samples()[start + n], want);
        }
        assert_eq!(out.samples()[start - 1], 0.5);
        assert_eq!(out.samples()[start + overlap], 0.5);
    }

    #[test]
    fn rejects_fades_that_do_not_fit() {
        let q = constant(0.1, 48000);
        let f = ContextFrame::whole(&q);
        assert!(matches!(
            render(&f, &f, &plan(48000, 0, 0.1)),
            Err(Error::CrossfadeTooLong { .. })
        ));
        assert!(matches!(
            render(&f, &f, &plan(48001, 0, 0.0)),
            Err(Error::CutOutOfRange { .. })
        ));
    }

    #[test]
    fn output_is_clipped() {
        let q = constant(1.0, 4 * 48000);
        let f = ContextFrame::new(&q, 48000, 48000).unwrap();
        let out = render(&f, &f, &plan(24000, 24000, 0.5)).unwrap();
        assert!(out.samples().iter().all(|&s| s <= 1.0));
    }
}
