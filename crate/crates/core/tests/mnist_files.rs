mod common;

use evoprune::mnist::{load_dir, split, SplitSpec, IMAGE_LEN};

#[test]
fn canonical_files_load() {
    if !common::mnist_available() {
        eprintln!(
            "MNIST not found at {}; skipping",
            common::mnist_dir().display()
        );
        return;
    }
    let (train, test) = load_dir(common::mnist_dir()).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(test.len(), 10_000);
    assert_eq!(train.images().len(), 60_000 * IMAGE_LEN);
    assert!(train.images().iter().all(|&p| (0.0..=1.0).contains(&p)));
    assert!(train.labels().iter().all(|&l| l < 10));
    // The first training labels of the canonical file.
    assert_eq!(&train.labels()[..5], &[5, 0, 4, 1, 9]);
    assert_eq!(&test.labels()[..5], &[7, 2, 1, 0, 4]);

    let (fit, validation) = split(&train, SplitSpec::default()).unwrap();
    assert_eq!((fit.len(), validation.len()), (59_000, 1_000));
    let mut counts = [0usize; 10];
    for &l in validation.labels() {
        counts[l as usize] += 1;
    }
    assert!(counts.iter().all(|&c| c > 50), "{counts:?}");
}
