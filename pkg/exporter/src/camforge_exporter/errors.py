class ExporterError(Exception):
    """Base class for exporter failures."""


class UnknownModel(ExporterError):
    """Requested model name has no registry entry."""


class UnknownCamMethod(ExporterError):
    """Requested CAM method has no producer."""


class CamFailure(ExporterError):
    """A CAM producer failed for this image/model; the method is recorded
    as invalid in the manifest instead of aborting the export."""


class ExportUnsupported(ExporterError):
    """The traced model contains an operation the graph writer cannot emit."""
