"""Import extraction, internal/external classification, and the import-block
boolean expression.

Branch statements (if/elif/else, try/except/else/finally, match/case) wrap
imports used for multiple-version control. Imports not enclosed by any
branch statement are block-free and must all succeed; each outermost branch
statement contributes a disjunction over its branches. The resulting tree
alternates All and Any levels from the root down.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass

INTERNAL = "internal"
EXTERNAL = "external"


class MissingResult(KeyError):
    """A leaf import has no entry in the supplied result map."""


@dataclass(frozen=True)
class ImportNode:
    """One imported module path at a specific location."""

    module_path: str
    kind: str  # "plain-import" | "from-import"
    relative_level: int
    file: str
    line: int
    col: int
    scope: str  # "module-level" | "function-level"


@dataclass(frozen=True)
class Leaf:
    node: ImportNode


@dataclass(frozen=True)
class AllOf:
    children: tuple = ()


@dataclass(frozen=True)
class AnyOf:
    children: tuple = ()


ImportExpr = AllOf  # a built expression is always rooted at an All node

_BRANCH_TYPES = (ast.If, ast.Try, ast.Match)
_FUNCTION_TYPES = (ast.FunctionDef, ast.AsyncFunctionDef)


def _nodes_from_statement(stmt, file: str, in_function: bool) -> list[ImportNode]:
    scope = "function-level" if in_function else "module-level"
    out = []
    if isinstance(stmt, ast.Import):
        for alias in stmt.names:
            out.append(ImportNode(alias.name, "plain-import", 0, file,
                                  stmt.lineno, stmt.col_offset, scope))
    elif isinstance(stmt, ast.ImportFrom):
        out.append(ImportNode(stmt.module or "", "from-import", stmt.level or 0,
                              file, stmt.lineno, stmt.col_offset, scope))
    return out


def collect_imports(tree: ast.AST, file: str | None = None) -> list[ImportNode]:
    """Every import statement in the tree, one node per imported module path.

    A from-import contributes the module path only; the imported names are
    not modeled (validation is module-granular).
    """
    file = file or "<unknown>"
    found: list[ImportNode] = []

    def walk(node, in_function: bool):
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.Import, ast.ImportFrom)):
                found.extend(_nodes_from_statement(child, file, in_function))
            else:
                walk(child, in_function or isinstance(child, _FUNCTION_TYPES))

    walk(tree, False)
    return found


def classify_import(node: ImportNode, local_modules) -> str:
    """INTERNAL for relative imports and first segments found among the local
    modules; EXTERNAL otherwise."""
    if node.relative_level > 0:
        return INTERNAL
    top = node.module_path.split(".")[0]
    return INTERNAL if top in local_modules else EXTERNAL


def find_dynamic_imports(tree: ast.AST) -> list[tuple[int, str]]:
    """Call sites of __import__ or importlib.import_module.

    Runtime-string imports are outside static analysis; callers surface
    them as warnings."""
    found = []
    for node in ast.walk(tree):
        if not isinstance(node, ast.Call):
            continue
        func = node.func
        if isinstance(func, ast.Name) and func.id == "__import__":
            found.append((node.lineno, "__import__"))
        elif (isinstance(func, ast.Attribute) and func.attr == "import_module"
              and isinstance(func.value, ast.Name) and func.value.id == "importlib"):
            found.append((node.lineno, "importlib.import_module"))
    return sorted(found)


def _branches(stmt) -> list[list]:
    """The alternative statement lists of one branch statement."""
    if isinstance(stmt, ast.If):
        # the elif chain lives inside orelse and is handled as a nested If;
        # a missing else is an empty branch
        return [list(stmt.body), list(stmt.orelse)]
    if isinstance(stmt, ast.Try):
        branches = [list(stmt.body) + list(stmt.orelse) + list(stmt.finalbody)]
        for handler in stmt.handlers:
            branches.append(list(handler.body) + list(stmt.finalbody))
        return branches
    if isinstance(stmt, ast.Match):
        branches = [list(case.body) for case in stmt.cases]
        if not any(_irrefutable_case(case) for case in stmt.cases):
            branches.append([])  # execution may skip every arm
        return branches
    raise AssertionError(f"not a branch statement: {stmt!r}")


def _irrefutable_case(case) -> bool:
    return (
        case.guard is None
        and isinstance(case.pattern, ast.MatchAs)
        and case.pattern.pattern is None
    )


def _subtree_has_external(stmt, keys: set) -> bool:
    for node in ast.walk(stmt):
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            for sub in _nodes_from_statement(node, "", False):
                if (node.lineno, node.col_offset, sub.module_path) in keys:
                    return True
    return False


def build_import_expr(tree: ast.AST, external_nodes) -> AllOf:
    """Build the alternating All/Any expression over the external imports.

    Loops, with-blocks and function/class bodies are transparent: imports
    inside them count as block-free relative to the enclosing level.
    Duplicate module paths among the direct leaves of one All node collapse
    to the first occurrence.
    """
    by_key = {(n.line, n.col, n.module_path): n for n in external_nodes}
    keys = set(by_key)

    def build_body(stmts) -> AllOf:
        leaves: list[ImportNode] = []
        groups: list[AnyOf] = []

        def scan(statements):
            for stmt in statements:
                if isinstance(stmt, (ast.Import, ast.ImportFrom)):
                    for sub in _nodes_from_statement(stmt, "", False):
                        node = by_key.get((stmt.lineno, stmt.col_offset, sub.module_path))
                        if node is not None:
                            leaves.append(node)
                elif isinstance(stmt, _BRANCH_TYPES):
                    if _subtree_has_external(stmt, keys):
                        groups.append(AnyOf(tuple(
                            build_body(branch) for branch in _branches(stmt)
                        )))
                else:
                    for body in _transparent_bodies(stmt):
                        scan(body)

        scan(stmts)
        deduped: list[Leaf] = []
        seen: set[str] = set()
        for node in leaves:
            if node.module_path not in seen:
                seen.add(node.module_path)
                deduped.append(Leaf(node))
        return AllOf(tuple(deduped) + tuple(groups))

    return build_body(getattr(tree, "body", []))


def _transparent_bodies(stmt):
    """Statement lists inside non-branch compound statements."""
    for attr in ("body", "orelse", "finalbody"):
        body = getattr(stmt, attr, None)
        if isinstance(body, list):
            yield body


def evaluate_expr(expr, results: dict) -> bool:
    """Evaluate an import expression given per-leaf import outcomes.

    An empty All is true; an empty Any is true as well, since a branch
    statement containing no external imports constrains nothing.
    """
    if isinstance(expr, Leaf):
        try:
            return results[expr.node]
        except KeyError:
            raise MissingResult(f"no result for {expr.node.module_path} "
                                f"at line {expr.node.line}") from None
    if isinstance(expr, AllOf):
        return all(evaluate_expr(child, results) for child in expr.children)
    if isinstance(expr, AnyOf):
        if not expr.children:
            return True
        return any(evaluate_expr(child, results) for child in expr.children)
    raise TypeError(f"not an import expression node: {expr!r}")


def iter_leaves(expr):
    """All Leaf nodes of an expression, depth-first."""
    if isinstance(expr, Leaf):
        yield expr
    elif isinstance(expr, (AllOf, AnyOf)):
        for child in expr.children:
            yield from iter_leaves(child)


def root_leaves(expr: AllOf):
    """The block-free leaves: direct Leaf children of the root All node."""
    return [c for c in expr.children if isinstance(c, Leaf)]


def check_alternation(expr, expect: str = "all") -> bool:
    """Structural invariant: levels alternate All and Any from the root down,
    and leaves hang only off All nodes."""
    if isinstance(expr, AllOf):
        if expect != "all":
            return False
        return all(
            isinstance(c, Leaf) or check_alternation(c, "any") for c in expr.children
        )
    if isinstance(expr, AnyOf):
        if expect != "any":
            return False
        return all(isinstance(c, AllOf) and check_alternation(c, "all")
                   for c in expr.children)
    return False
