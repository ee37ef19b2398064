from typing import Optional


class DecafError(Exception):
    """
    Ancestor for all errors raised by the library.
    """
    pass


class ShapeError(DecafError):
    """
    Raised when matrix shapes do not agree.
    """
    pass


class NumericError(DecafError):
    """
    Raised when a NaN or Inf shows up in a tape node.
    """

    def __init__(self, msg: str, node: int):
        """
        Initializes the error.

        :param msg: the message
        :type msg: str
        :param node: the index of the offending tape node
        :type node: int
        """
        super().__init__("%s (node %d)" % (msg, node))
        self.node = node


class DivergenceError(DecafError):
    """
    Raised when a training loss stops being finite.
    """

    def __init__(self, stage: str, epoch: int, msg: str = "loss is not finite"):
        """
        Initializes the error.

        :param stage: the training stage that diverged
        :type stage: str
        :param epoch: the epoch in which it happened
        :type epoch: int
        :param msg: additional details
        :type msg: str
        """
        super().__init__("%s diverged in epoch %d: %s" % (stage, epoch, msg))
        self.stage = stage
        self.epoch = epoch


class ParseError(DecafError):
    """
    Raised when a dataset or checkpoint file cannot be parsed.
    """

    def __init__(self, path: str, line: Optional[int], msg: str):
        """
        Initializes the error.

        :param path: the file that failed to parse
        :type path: str
        :param line: the 1-based line number, None if not applicable
        :type line: int
        :param msg: the reason
        :type msg: str
        """
        if line is None:
            super().__init__("%s: %s" % (path, msg))
        else:
            super().__init__("%s:%d: %s" % (path, line, msg))
        self.path = path
        self.line = line


class StageError(DecafError):
    """
    Wraps an error raised in one of the experiment stages.
    """

    def __init__(self, stage: str, cause: Exception):
        """
        Initializes the error.

        :param stage: the stage label (generate, shift, split, train, predict, evaluate)
        :type stage: str
        :param cause: the original exception
        :type cause: Exception
        """
        super().__init__("%s: %s" % (stage, str(cause)))
        self.stage = stage
        self.cause = cause
