mod common;

use common::oracle::Micro;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn simulator_matches_reference_port() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e57);
    for case in 0..200 {
        let m = Micro::random(&mut rng);
        let want = m.run();
        let got = common::engine_timeline(&m);
        assert_eq!(got, want, "case {case}\n{}", m.toml());
    }
}
