class MixTraceError(Exception):
    exit_code = 2

    def __init__(self, errr: str):
        super().__init__(errr)


class ValidationError(MixTraceError):
    exit_code = 1


class EmptyDataset(ValidationError):
    pass


class DomainError(MixTraceError, ValueError):
    pass


class ZeroLengthPath(MixTraceError):
    def __init__(self, label: str):
        super().__init__(f"Trace {label!r} never moves, refusing to smooth it.")
        self.label = label


class ConsistencyError(MixTraceError):
    pass


class InfeasibleSchedule(MixTraceError):
    pass


class MissingStage(MixTraceError):
    def __init__(self, stage: str, path):
        super().__init__(f"Stage {stage} output not found at {path}, run anonymize first.")
        self.stage = stage


class ConfigError(MixTraceError):
    exit_code = 3
