"""Runtime error taxonomy shared by the interpreter and the VM."""


class MVRuntimeError(Exception):
    kind = "RuntimeError"

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def to_json(self) -> dict:
        return {"kind": self.kind, "message": self.message}


class Overflow(MVRuntimeError):
    kind = "Overflow"


class DivByZero(MVRuntimeError):
    kind = "DivByZero"


class StackOverflow(MVRuntimeError):
    kind = "StackOverflow"


class StepLimitExceeded(MVRuntimeError):
    kind = "StepLimitExceeded"


class SerializationError(MVRuntimeError):
    kind = "SerializationError"


class DeserializationError(MVRuntimeError):
    kind = "DeserializationError"

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class InternalError(MVRuntimeError):
    kind = "InternalError"
