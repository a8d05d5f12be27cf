"""Exception types raised across the package."""


class InputError(ValueError):
    """An argument violates a documented precondition."""


class FormatError(InputError):
    """A file does not match its expected on-disk layout."""

    def __init__(self, message, offset=None, path=None):
        parts = [message]
        if offset is not None:
            parts.append(f"at byte offset {offset}")
        if path is not None:
            parts.append(f"in {path}")
        super().__init__(" ".join(parts))
        self.offset = offset
        self.path = path


class DegenerateClassError(InputError):
    """No anchor candidate exists for one or more classes."""

    def __init__(self, classes):
        self.classes = list(classes)
        super().__init__(f"no anchor candidates for class(es) {self.classes}")


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, stage=None):
        self.epoch = epoch
        self.stage = stage
        tags = []
        if stage is not None:
            tags.append(f"stage={stage}")
        if epoch is not None:
            tags.append(f"epoch={epoch}")
        suffix = f" ({', '.join(tags)})" if tags else ""
        super().__init__(message + suffix)
