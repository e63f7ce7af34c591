"""The configuration-issue taxonomy: 15 kinds, 3 categories, 3 checks.

The kind -> (category, check, fatal, label) mapping is data, not logic;
every detector constructs records through IssueRecord.make so the mapping
cannot drift.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class IssueCategory(str, Enum):
    INCOMPLETE_CONFIGURATION = "IncompleteConfiguration"
    INCORRECT_CONFIGURATION = "IncorrectConfiguration"
    INCORRECT_CODE = "IncorrectCode"


class CheckName(str, Enum):
    INSTALLATION = "installation"
    DEPENDENCY = "dependency"
    IMPORT_VALIDATION = "import-validation"


class IssueKind(str, Enum):
    MISSING_CONFIG_FILES = "MissingConfigFiles"
    MISSING_SETUP_REQUIRES = "MissingSetupRequires"
    MISSING_PYTHON_VERSION = "MissingPythonVersion"
    MISSING_DIRECT_IMPORT_DEPS = "MissingDirectImportDeps"
    SETUP_DEPENDENCY_CONFLICT = "SetupDependencyConflict"
    INCORRECT_PYTHON_VERSION = "IncorrectPythonVersion"
    OTHER_SETUP_RUNTIME_ERROR = "OtherSetupRuntimeError"
    METADATA_INCONSISTENCY = "MetadataInconsistency"
    VERSION_DATE_INCONSISTENCY = "VersionDateInconsistency"
    MISSING_INDIRECT_IMPORT_MODULES = "MissingIndirectImportModules"
    DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED = "DirectImportInconsistentWithInstalled"
    OTHER_IMPORT_RUNTIME_ERROR = "OtherImportRuntimeError"
    MISSING_SOURCE_CODE = "MissingSourceCode"
    PARSING_ERROR = "ParsingError"
    MULTIPLE_VERSION_CONTROL_FAILURE = "MultipleVersionControlFailure"


@dataclass(frozen=True)
class IssueInfo:
    category: IssueCategory
    check: CheckName
    fatal: bool
    label: str


_INCOMPLETE = IssueCategory.INCOMPLETE_CONFIGURATION
_INCORRECT = IssueCategory.INCORRECT_CONFIGURATION
_CODE = IssueCategory.INCORRECT_CODE
_INSTALL = CheckName.INSTALLATION
_DEP = CheckName.DEPENDENCY
_IMPORT = CheckName.IMPORT_VALIDATION

# Row order below is the canonical rendering order of the taxonomy table.
TAXONOMY: dict[IssueKind, IssueInfo] = {
    IssueKind.MISSING_CONFIG_FILES:
        IssueInfo(_INCOMPLETE, _INSTALL, True, "Missing configuration files"),
    IssueKind.MISSING_SETUP_REQUIRES:
        IssueInfo(_INCOMPLETE, _INSTALL, True, "Missing required libraries for setup"),
    IssueKind.MISSING_PYTHON_VERSION:
        IssueInfo(_INCOMPLETE, _DEP, False, "Missing Python versions"),
    IssueKind.MISSING_DIRECT_IMPORT_DEPS:
        IssueInfo(_INCOMPLETE, _IMPORT, False, "Missing required libraries for direct imports"),
    IssueKind.SETUP_DEPENDENCY_CONFLICT:
        IssueInfo(_INCORRECT, _INSTALL, True, "Dependency conflicts in setup"),
    IssueKind.INCORRECT_PYTHON_VERSION:
        IssueInfo(_INCORRECT, _INSTALL, True, "Incorrect Python versions"),
    IssueKind.OTHER_SETUP_RUNTIME_ERROR:
        IssueInfo(_INCORRECT, _INSTALL, True, "Other run-time errors in setup"),
    IssueKind.METADATA_INCONSISTENCY:
        IssueInfo(_INCORRECT, _DEP, False, "Inconsistent configurations with metadata"),
    IssueKind.VERSION_DATE_INCONSISTENCY:
        IssueInfo(_INCORRECT, _DEP, False, "Inconsistent version numbers with release dates"),
    IssueKind.MISSING_INDIRECT_IMPORT_MODULES:
        IssueInfo(_INCORRECT, _IMPORT, False, "Missing required modules for indirect imports"),
    IssueKind.DIRECT_IMPORT_INCONSISTENT_WITH_INSTALLED:
        IssueInfo(_INCORRECT, _IMPORT, False, "Inconsistent modules in direct imports with installed dependencies"),
    IssueKind.OTHER_IMPORT_RUNTIME_ERROR:
        IssueInfo(_INCORRECT, _IMPORT, False, "Other run-time errors in imports"),
    IssueKind.MISSING_SOURCE_CODE:
        IssueInfo(_CODE, _DEP, True, "Missing source code"),
    IssueKind.PARSING_ERROR:
        IssueInfo(_CODE, _DEP, True, "Parsing error"),
    IssueKind.MULTIPLE_VERSION_CONTROL_FAILURE:
        IssueInfo(_CODE, _IMPORT, False, "Multiple version control failure"),
}

KIND_ORDER: tuple[IssueKind, ...] = tuple(TAXONOMY)

_CHECK_RANK = {CheckName.INSTALLATION: 0, CheckName.DEPENDENCY: 1, CheckName.IMPORT_VALIDATION: 2}


@dataclass(frozen=True)
class IssueRecord:
    """One detected configuration issue with its taxonomy attribution."""

    kind: IssueKind
    category: IssueCategory
    fatal: bool
    check: CheckName
    location: str
    evidence: str

    @classmethod
    def make(cls, kind: IssueKind, location: str, evidence: str) -> "IssueRecord":
        info = TAXONOMY[kind]
        return cls(kind, info.category, info.fatal, info.check, location, evidence)

    def sort_key(self):
        return (_CHECK_RANK[self.check], self.kind.value, self.location, self.evidence)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "category": self.category.value,
            "fatal": self.fatal,
            "check": self.check.value,
            "location": self.location,
            "evidence": self.evidence,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "IssueRecord":
        return cls(
            IssueKind(obj["kind"]),
            IssueCategory(obj["category"]),
            bool(obj["fatal"]),
            CheckName(obj["check"]),
            obj["location"],
            obj["evidence"],
        )
