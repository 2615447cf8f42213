"""Exception types shared across the package."""


class LocaterError(Exception):
    """Base class for all locater errors."""


class DataError(LocaterError):
    """Malformed or inconsistent input data."""


class UnknownRegionError(LocaterError):
    def __init__(self, region: str):
        super().__init__(f"unknown region: {region}")
        self.region = region


class UnknownDeviceError(LocaterError):
    def __init__(self, device: str):
        super().__init__(f"unknown device: {device}")
        self.device = device


class UnknownAPError(LocaterError):
    def __init__(self, ap: str):
        super().__init__(f"event references AP absent from space model: {ap}")
        self.ap = ap


class OutOfHorizonError(LocaterError):
    def __init__(self, device: str, t: int):
        super().__init__(f"time {t} outside observed horizon of device {device}")
        self.device = device
        self.t = t


class NoLabeledDataError(LocaterError):
    """Iterative classification needs at least one labeled example.

    Callers should fall back to threshold defaults when this is raised.
    """


class TooManyDevicesError(LocaterError):
    """Brute-force world enumeration guard tripped."""


class InfeasibleCapacityError(LocaterError):
    """Scenario demands more mandatory attendees than an event's capacity."""
