"""DH-parameter pose augmentation: kinematics, constraints, critics' features and synthesis."""

from ._dhaug import (
    KEYPOINT_COUNT,
    PARAM_COUNT,
    DegenerateBone,
    DepthViolation,
    InvalidArgument,
    ParseError,
    bones,
    bounds,
    dh_matrix,
    features,
    forward_kinematics,
    gamma_schedule,
    generate,
    joint_cosines,
    keypoint_names,
    load_dataset,
    param_names,
    project,
    run_cli,
    squash,
    stand_in_corpus,
    topology_hash,
    validate,
)


def main(argv=None):
    """Console entry point mirroring the C++ `dhaug` binary."""
    import sys

    code, out, err = run_cli(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code


__all__ = [name for name in dir() if not name.startswith("_")]
