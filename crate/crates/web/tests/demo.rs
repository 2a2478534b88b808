use divetrack::segmentation::HsvRange;
use divetrack_web::{demo_spec, Demo, TrackView};

#[test]
fn same_seed_same_scene() {
    let a = Demo::build(9, 3).unwrap();
    let b = Demo::build(9, 3).unwrap();
    assert_eq!(a.panorama_rgba(), b.panorama_rgba());
    assert_eq!(a.displacement(), b.displacement());
    assert_ne!(demo_spec(9, 3).camera_path, demo_spec(10, 3).camera_path);
}

#[test]
fn wider_window_changes_the_smoothed_series_only() {
    let demo = Demo::build(2, 1).unwrap();
    let narrow = demo.tracked(HsvRange::default(), 1).unwrap();
    let wide = demo.tracked(HsvRange::default(), 9).unwrap();
    assert_eq!(narrow.trajectory.samples, wide.trajectory.samples);
    assert_ne!(narrow.trajectory.smoothed, wide.trajectory.smoothed);
    let truth: Vec<_> = narrow
        .trajectory
        .samples
        .iter()
        .map(|s| divetrack::registration::Point::new(s.x, s.y))
        .collect();
    // Window 1 reproduces the raw barycentres.
    let view = TrackView::new(&narrow, &truth);
    assert_eq!(view.raw_rmse(), view.smoothed_rmse());
}
