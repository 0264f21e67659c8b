//! Streams one session per user group with the buffer-based policy and
//! prints the QoE breakdown, then writes a session log to stdout for UG1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvrl::abr::{
    bba_action, write_session_log, AbrSession, UserGroup, VideoSpec, BBA_CUSHION_SECS, BBA_RESERVOIR_SECS,
    REBUFFER_PENALTY,
};
use tvrl::Result;

fn stream(group: UserGroup, rng: &mut ChaCha8Rng) -> Result<AbrSession> {
    let video = VideoSpec::default_video();
    let trace = group.generator().generate(600, rng)?;
    let mut session = AbrSession::new(video.clone(), trace, REBUFFER_PENALTY)?;
    while !session.is_done() {
        let level = bba_action(session.buffer_s(), &video.bitrates_kbps, BBA_RESERVOIR_SECS, BBA_CUSHION_SECS);
        session.advance(level)?;
    }
    Ok(session)
}

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for group in UserGroup::ALL {
        let b = stream(group, &mut rng)?.breakdown();
        println!(
            "{}: QoE/chunk {:>6.2}  quality {:>7.1}  smoothness {:>6.1}  rebuffer {:>5.1} s",
            group.name(),
            b.total() / b.chunks as f64,
            b.quality,
            b.smoothness,
            b.rebuffer_s
        );
    }
    let session = stream(UserGroup::Ug1, &mut rng)?;
    write_session_log(session.log(), std::io::stdout())
}
