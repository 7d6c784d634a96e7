#pragma once

#include "flutterspec/errors.hpp"
#include "flutterspec/operator.hpp"
#include "flutterspec/linalg.hpp"
#include "flutterspec/pseudospectrum.hpp"
#include "flutterspec/flutter.hpp"
#include "flutterspec/continuation.hpp"
#include "flutterspec/models.hpp"
#include "flutterspec/io.hpp"
#include "flutterspec/cli.hpp"
