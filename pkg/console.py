"""
console.py

Tagged, coloured console output used by every module.

    [+] progress      info()
    [*] detail        detail()
    [!] warning/error warn(), error()

Verbosity is process-wide and set once by the command script.
"""
from __future__ import annotations

import sys

from colorama import Fore, Style, init

# Initialize colorama for coloured output
init(autoreset=True)

QUIET = 0
NORMAL = 1
DEBUG = 2

_level = NORMAL
RULE_WIDTH = 72


def set_verbosity(level: int) -> None:
    global _level
    _level = level


def verbosity() -> int:
    return _level


def info(msg: str) -> None:
    if _level >= NORMAL:
        print(f"{Fore.GREEN}[+]{Style.RESET_ALL} {msg}")


def detail(msg: str) -> None:
    if _level >= DEBUG:
        print(f"{Fore.CYAN}[*]{Style.RESET_ALL} {msg}")


def warn(msg: str) -> None:
    if _level >= NORMAL:
        print(f"{Fore.YELLOW}[!] {msg}{Style.RESET_ALL}")


def error(msg: str) -> None:
    # errors are never silenced
    sys.stderr.write(f"{Fore.RED}[!] {msg}{Style.RESET_ALL}\n")


def banner(title: str) -> None:
    if _level >= NORMAL:
        print("=" * RULE_WIDTH)
        print(title)
        print("=" * RULE_WIDTH)


def rule() -> None:
    if _level >= NORMAL:
        print("-" * RULE_WIDTH)
