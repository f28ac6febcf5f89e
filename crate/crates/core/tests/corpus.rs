use protoforge::corpus::{default_root, load_cases, run_corpus, CorpusError};
use protoforge::parse_sketch;

#[test]
fn corpus_sketches_round_trip() {
    for case in load_cases(&default_root()).unwrap() {
        let lc = case.load().unwrap();
        let text = lc.sketch.serialize();
        assert_eq!(parse_sketch(&text).unwrap(), lc.sketch, "{}", case.name);
        let truth = lc.truth_protocol().unwrap();
        assert_eq!(
            parse_sketch(&truth.serialize()).unwrap(),
            truth,
            "{}",
            case.name
        );
    }
}

#[test]
fn filtered_run_covers_one_protocol() {
    let rep = run_corpus(&default_root(), Some("lock_serv")).unwrap();
    let names: Vec<_> = rep.cases.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["lock_serv-pre", "lock_serv-prepost"]);
    assert!(rep.ok(), "{rep}");
}

#[test]
fn unknown_filter_is_an_error() {
    assert!(matches!(
        run_corpus(&default_root(), Some("raft")),
        Err(CorpusError::NoMatch(_))
    ));
}
