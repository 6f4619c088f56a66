class SegbenchError(Exception):
    """Domain error: a precondition or invariant was violated.

    The CLI maps this to exit code 1; the message names what was violated.
    """
