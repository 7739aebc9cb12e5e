use evrecon::encode::{build_voxel_grid, slice_by_count};
use evrecon::eventsim::{simulate, AffineVelocity, Scene, SceneConfig, SimParams, Texture};
use evrecon::pipeline::{
    encode_groups, io, run_reconstruction, warp_codes, ExternalFlow, FlowProvider, GroundTruth, GroundTruthFlow,
    RunConfig, StepInfo, WarpMode, ZeroFlow,
};
use evrecon::sparse::{cista_forward, init_weights_from_dict, step_constant, DictionaryPair};
use evrecon::warp::forward_warp_frame;
use evrecon::{CistaState, CistaWeights, EventStream, Frame};

fn scene() -> SceneConfig {
    SceneConfig::background_only(
        24,
        20,
        Texture::checker(4.0),
        AffineVelocity::translation(30.0, -12.0),
        0.2,
    )
}

fn events_and_weights() -> (EventStream, CistaWeights) {
    let sim = simulate(&scene(), &SimParams::noiseless(0.15)).unwrap();
    let dict = DictionaryPair::random(4, 6, 3, 5);
    let step = step_constant(&dict, 20, 24);
    let w = init_weights_from_dict(&dict, 0.01, step, 3)
        .unwrap()
        .with_code_warm_start();
    (sim.events, w)
}

#[test]
fn scripted_two_group_composition_matches_the_loop() {
    let (events, weights) = events_and_weights();
    let per = events.len().div_ceil(2);
    let cfg = RunConfig {
        bins: 3,
        events_per_group: per,
        ..RunConfig::default()
    };
    let mut provider = GroundTruthFlow::from_scene(Scene::new(scene()).unwrap());
    let rec = run_reconstruction(&events, &cfg, &mut provider, &weights).unwrap();
    assert_eq!(rec.frames.len(), 2);

    let scene = Scene::new(scene()).unwrap();
    let mut prev = Frame::zeros(24, 20);
    let mut state = CistaState::zeros(&weights.arch, 24, 20);
    for (i, group) in slice_by_count(&events, per).unwrap().iter().enumerate() {
        let ev = &group.events;
        let flow = scene.ground_truth_flow(ev.t_start(), ev.t_end());
        let frame_in = forward_warp_frame(&prev, &flow).unwrap();
        let codes_in = warp_codes(&state.codes, &flow).unwrap();
        let voxels = build_voxel_grid(ev, 3, ev.t_start(), ev.t_end()).unwrap();
        let out = cista_forward(&voxels, &frame_in, &codes_in, &state.lsrc, &state.lstc, &weights).unwrap();
        assert_eq!(out.frame, rec.frames[i], "step {i}");
        assert_eq!(flow, rec.flows[i]);
        prev = out.frame;
        state = out.state;
    }
}

#[test]
fn external_files_reproduce_ground_truth_run() {
    let (events, weights) = events_and_weights();
    let cfg = RunConfig {
        bins: 3,
        events_per_group: events.len() / 4 + 1,
        ..RunConfig::default()
    };
    let mut gt = GroundTruthFlow::from_scene(Scene::new(scene()).unwrap());
    let reference = run_reconstruction(&events, &cfg, &mut gt, &weights).unwrap();
    let dir = tempfile::tempdir().unwrap();
    reference.write_to(dir.path()).unwrap();
    let mut external = ExternalFlow::new(dir.path());
    let replay = run_reconstruction(&events, &cfg, &mut external, &weights).unwrap();
    assert_eq!(replay.frames, reference.frames);
    assert_eq!(replay.flows, reference.flows);
    assert_eq!(replay.report, reference.report);
}

#[test]
fn ground_truth_export_serves_as_flow_source() {
    let (events, weights) = events_and_weights();
    let per = events.len() / 3 + 1;
    let cfg = RunConfig {
        bins: 3,
        events_per_group: per,
        ..RunConfig::default()
    };
    let scene_obj = Scene::new(scene()).unwrap();
    let gt = GroundTruth::for_groups(&scene_obj, &events, per).unwrap();
    let dir = tempfile::tempdir().unwrap();
    gt.write(None, Some(dir.path())).unwrap();
    let from_files = run_reconstruction(&events, &cfg, &mut ExternalFlow::new(dir.path()), &weights).unwrap();
    let from_scene = run_reconstruction(&events, &cfg, &mut GroundTruthFlow::from_scene(scene_obj), &weights).unwrap();
    // .flo stores f32, exactly what the scene provider produces
    assert_eq!(from_files.frames, from_scene.frames);
    assert_eq!(from_files.timestamps, gt.timestamps);
}

#[test]
fn frame_count_follows_groups() {
    let (events, weights) = events_and_weights();
    for per in [events.len(), events.len() / 3, 97] {
        let groups = slice_by_count(&events, per).unwrap().len();
        for initial in [false, true] {
            let cfg = RunConfig {
                bins: 3,
                events_per_group: per,
                emit_initial_frame: initial,
                ..RunConfig::default()
            };
            let rec = run_reconstruction(&events, &cfg, &mut ZeroFlow, &weights).unwrap();
            assert_eq!(rec.frames.len(), groups + initial as usize);
            assert_eq!(rec.report.steps.len(), groups);
        }
    }
}

#[test]
fn zero_flow_equals_unwarped_run() {
    let (events, weights) = events_and_weights();
    let base = RunConfig {
        bins: 3,
        events_per_group: 200,
        ..RunConfig::default()
    };
    let warped = run_reconstruction(&events, &base, &mut ZeroFlow, &weights).unwrap();
    let plain = run_reconstruction(
        &events,
        &RunConfig {
            warp: WarpMode::None,
            ..base.clone()
        },
        &mut ZeroFlow,
        &weights,
    )
    .unwrap();
    assert_eq!(warped.frames, plain.frames);
}

#[test]
fn runs_are_deterministic_through_files() {
    let (events, weights) = events_and_weights();
    let cfg = RunConfig {
        bins: 3,
        events_per_group: 150,
        ..RunConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        io::write_events(&d.path().join("events.evs"), &events).unwrap();
        let ev = io::read_events(&d.path().join("events.evs")).unwrap();
        let mut p = GroundTruthFlow::from_scene(Scene::new(scene()).unwrap());
        run_reconstruction(&ev, &cfg, &mut p, &weights)
            .unwrap()
            .write_to(d.path())
            .unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 3);
    for n in names {
        let a = std::fs::read(dirs[0].path().join(&n)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&n)).unwrap();
        assert_eq!(a, b, "{n:?}");
    }
}

#[test]
fn missing_flow_file_names_the_step() {
    let (events, weights) = events_and_weights();
    let dir = tempfile::tempdir().unwrap();
    let mut provider = ExternalFlow::new(dir.path());
    let info = StepInfo {
        index: 0,
        t_start: 0.0,
        t_end: 0.1,
        width: 24,
        height: 20,
    };
    assert!(provider.flow(&info).is_err());
    let cfg = RunConfig {
        bins: 3,
        events_per_group: 500,
        ..RunConfig::default()
    };
    let err = run_reconstruction(&events, &cfg, &mut provider, &weights).unwrap_err();
    assert!(err.to_string().contains("step 0"), "{err}");
}

#[test]
fn encoded_groups_conserve_polarity() {
    let (events, _) = events_and_weights();
    let per = events.len() / 5 + 1;
    let grids = encode_groups(&events, 4, per).unwrap();
    let groups = slice_by_count(&events, per).unwrap();
    assert_eq!(grids.len(), groups.len());
    for (g, s) in grids.iter().zip(&groups) {
        assert_eq!((g.t_start(), g.t_end()), (s.events.t_start(), s.events.t_end()));
        assert!((g.total_mass() - s.events.signed_count() as f64).abs() < 1e-9);
    }
    assert!(encode_groups(&events, 0, per).is_err());
}
