use std::fs;
use std::path::Path;

use specgconv::io::{load_single_graph, load_tu_dataset, make_folds, write_single_graph};

fn single_graph_dir(dir: &Path) {
    fs::write(dir.join("features.csv"), "a,b\n1,0\n0,1\n1,1\n0.5,2\n").unwrap();
    // reciprocal and duplicate rows on purpose
    fs::write(dir.join("edges.csv"), "source,target,weight\n0,1,1\n1,0,1\n1,2,0.5\n2,3,2\n2,3,2\n").unwrap();
    fs::write(dir.join("labels.csv"), "node,label\n0,0\n1,1\n2,1\n3,0\n").unwrap();
    fs::write(dir.join("split.csv"), "node,role\n0,train\n1,train\n2,val\n3,test\n").unwrap();
}

#[test]
fn reloading_is_pure_and_symmetrization_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    single_graph_dir(dir.path());
    let a = load_single_graph(dir.path()).unwrap();
    let b = load_single_graph(dir.path()).unwrap();
    assert_eq!(a.graph(), b.graph());
    assert_eq!(a.graph().edge_count(), 3);

    let out = tempfile::tempdir().unwrap();
    write_single_graph(out.path(), &a).unwrap();
    let c = load_single_graph(out.path()).unwrap();
    assert_eq!(a.graph(), c.graph());
    assert_eq!(a.num_classes(), 2);
}

#[test]
fn tu_reload_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("SET");
    fs::create_dir(&dir).unwrap();
    let w = |suffix: &str, body: &str| fs::write(dir.join(format!("SET_{suffix}.txt")), body).unwrap();
    w("A", "1, 2\n2, 1\n3, 4\n4, 3\n4, 5\n5, 4\n");
    w("graph_indicator", "1\n1\n2\n2\n2\n");
    w("graph_labels", "3\n7\n");
    w("node_labels", "1\n1\n2\n1\n2\n");
    // the name defaults to the directory name
    let a = load_tu_dataset(&dir, None, false).unwrap();
    let b = load_tu_dataset(&dir, Some("SET"), false).unwrap();
    assert_eq!(a.graphs(), b.graphs());
    assert_eq!(a.labels(), vec![0, 1]);
    assert_eq!(a.feature_width(), 2);
}

#[test]
fn folds_of_sixty() {
    let labels: Vec<usize> = (0..600).map(|i| i % 6).collect();
    let folds = make_folds(&labels, 10, 42).unwrap();
    for f in 0..10 {
        assert_eq!(folds.iter().filter(|&&x| x == f).count(), 60);
    }
    assert_eq!(folds, make_folds(&labels, 10, 42).unwrap());
}
