from .commands import (
    main,
    build_parser,
    load_run_config,
    cmd_gen_data,
    cmd_train,
    cmd_detect,
    cmd_explain,
    cmd_benchmark,
)

__all__ = [
    "main",
    "build_parser",
    "load_run_config",
    "cmd_gen_data",
    "cmd_train",
    "cmd_detect",
    "cmd_explain",
    "cmd_benchmark",
]
