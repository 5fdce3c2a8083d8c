//! Holds the `acceptance` test target. It lives in its own package so that
//! the slow end-to-end criteria run after the unit and CLI tests.
