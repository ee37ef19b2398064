import abc

from decaf.config import AbstractOptionHandler, Option


class AbstractHelpGenerator(abc.ABC):
    """
    Ancestor for classes that generate help from option handlers.
    """

    def file_extension(self) -> str:
        """
        Returns the preferred file extension.

        :return: the file extension (incl dot)
        :rtype: str
        """
        raise NotImplementedError()

    def _do_generate(self, handler: AbstractOptionHandler) -> str:
        """
        Performs the actual generation.

        :param handler: the option handler to generate the help for
        :type handler: AbstractOptionHandler
        :return: the generate string
        :rtype: str
        """
        raise NotImplementedError()

    def generate(self, handler: AbstractOptionHandler, output_path: str = None):
        """
        Generates help for the supplied option handler.

        :param handler: the option handler to generate the help for
        :type handler: AbstractOptionHandler
        :param output_path: the file to store the help in, uses stdout if not provided
        :type output_path: str
        """
        help = self._do_generate(handler)
        if output_path is None:
            print(help)
        else:
            with open(output_path, "w") as hf:
                hf.write(help)


def _constraints(opt: Option) -> str:
    parts = []
    if opt.lower is not None:
        parts.append(">= %s" % str(opt.lower))
    if opt.upper is not None:
        parts.append("<= %s" % str(opt.upper))
    if opt.choices is not None:
        parts.append("one of: %s" % ", ".join(str(c) for c in opt.choices))
    return "; ".join(parts)


class TextHelpGenerator(AbstractHelpGenerator):
    """
    Plain text, one block per option.
    """

    def file_extension(self) -> str:
        return ".txt"

    def _do_generate(self, handler: AbstractOptionHandler) -> str:
        lines = [type(handler).__name__, "", handler.description(), ""]
        for opt in handler.option_manager.options():
            lines.append(str(opt))
            constraints = _constraints(opt)
            if len(constraints) > 0:
                lines.append("   (%s)" % constraints)
        return "\n".join(lines)


class MarkdownHelpGenerator(AbstractHelpGenerator):
    """
    A markdown table of all options.
    """

    def file_extension(self) -> str:
        return ".md"

    def _do_generate(self, handler: AbstractOptionHandler) -> str:
        lines = [
            "# " + type(handler).__name__, "", handler.description(), "",
            "| option | type | default | constraints | help |",
            "|---|---|---|---|---|",
        ]
        for opt in handler.option_manager.options():
            lines.append("| %s | %s | %s | %s | %s |" % (
                opt.name, opt.value_type.__name__, repr(opt.def_value), _constraints(opt), opt.help))
        return "\n".join(lines)


HELP_FORMATS = {
    "text": TextHelpGenerator,
    "markdown": MarkdownHelpGenerator,
}
