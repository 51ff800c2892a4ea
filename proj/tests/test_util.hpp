#pragma once

#include <gtest/gtest.h>

#include "hublab/error.hpp"

// Asserts that `stmt` throws hublab::Error carrying `expected`.
#define EXPECT_CODE(stmt, expected)                                                   \
  do {                                                                                \
    try {                                                                             \
      stmt;                                                                           \
      ADD_FAILURE() << "expected " << hublab::to_string(expected) << ", nothing thrown"; \
    } catch (const hublab::Error& e_) {                                               \
      EXPECT_EQ(e_.code(), expected) << e_.what();                                    \
    }                                                                                 \
  } while (0)
