import pytest

from affectanim.config import config_from_dict
from affectanim.synth import write_audio_corpus

TINY = {
    "dern": {"widths": [4, 8, 8], "fc": [16], "epochs": 3},
    "dsrn": {"widths": [4, 8, 8, 8], "fc": [32, 16], "epochs": 3},
}


def tiny_config(manifest, work_dir, **extra):
    return config_from_dict({"manifest": str(manifest), "work_dir": str(work_dir), **TINY, **extra})


def run_pipeline(cfg, wav, out_dir):
    from affectanim import pipeline

    summary = pipeline.cmd_prepare(cfg)
    pipeline.cmd_train_dern(cfg)
    pipeline.cmd_train_dsrn(cfg)
    pipeline.cmd_train_dsrn(cfg, all_combined=True)
    meta = pipeline.cmd_animate(cfg, wav, out_dir)
    return summary, meta


@pytest.fixture(scope="session")
def audio_corpus(tmp_path_factory):
    """Small on-disk corpus: 2 speakers x 7 emotions x 3 utterances of 1 s."""
    out = tmp_path_factory.mktemp("corpus")
    return write_audio_corpus(out, n_speakers=2, per_emotion=3, seconds=1.0, seed=11)


@pytest.fixture(scope="session")
def trained_run(audio_corpus, tmp_path_factory):
    """One complete prepare/train/animate run with tiny networks."""
    root = tmp_path_factory.mktemp("run")
    cfg = tiny_config(audio_corpus, root / "work")
    wav = audio_corpus.parent / "wav" / "s1_sad_01.wav"
    summary, meta = run_pipeline(cfg, wav, root / "anim")
    return cfg, summary, meta, root / "anim", wav


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
